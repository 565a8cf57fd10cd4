#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ntljb/tensor.hpp"

// Dataset plumbing. Pixels are stored as uint8 and normalized to [-1, 1]
// on batch assembly; v = (2*x - 255)/255 and its exact inverse
// round((255*v + 255)/2) round-trip all 256 byte values.

namespace ntljb {

float normalize_pixel(std::uint8_t x);
std::uint8_t denormalize_pixel(float v);

// One split of one domain. labels is empty for unlabeled sets.
struct SampleSet {
  int channels = 0, height = 0, width = 0;
  std::vector<std::uint8_t> pixels;
  std::vector<int> labels;

  int count() const {
    const std::int64_t px = static_cast<std::int64_t>(channels) * height * width;
    return px == 0 ? 0 : static_cast<int>(pixels.size() / px);
  }
  bool labeled() const { return !labels.empty(); }
  std::int64_t pixels_per_image() const {
    return static_cast<std::int64_t>(channels) * height * width;
  }

  // Normalized image batch {n,c,h,w} for the given sample indices.
  Tensor batch(const std::vector<int>& indices) const;
  Tensor batch_range(int first, int n) const;
  Tensor all_images() const { return batch_range(0, count()); }
  std::vector<int> labels_for(const std::vector<int>& indices) const;

  SampleSet without_labels() const;
  std::string content_digest() const;
};

struct DomainPair {
  std::string name;
  int class_count = 0;
  std::vector<std::string> class_names;
  int resolution = 0, channels = 0;
  SampleSet authorized_train, authorized_test;
  SampleSet unauthorized_train, unauthorized_test;
};

// What the attacker legitimately holds: a small labeled authorized subset
// and the unlabeled unauthorized pool.
struct AttackerDataView {
  SampleSet authorized_subset;
  SampleSet unauthorized_pool;
};

std::vector<std::string> available_pairs();

// Loads (building and caching on first use) a registered domain pair.
// data_root resolution order: explicit argument, then NTLJB_DATA_ROOT, then
// "./data". Unknown names and missing raw source files raise.
DomainPair load_domain_pair(const std::string& name,
                            const std::string& data_root = "");

// Stratified subset of authorized_train: total ceil(fraction*N); per class
// floor(fraction*n_c) plus remainder seats by largest fractional part (ties
// broken by class index); within a class, samples chosen by seeded draw.
// The unauthorized pool is the unauthorized test split with labels removed.
AttackerDataView take_authorized_subset(const DomainPair& pair,
                                        double fraction, std::uint64_t seed);

// Contiguous index batches over [0, count); with drop_last the tail batch
// shorter than batch_size is discarded.
std::vector<std::vector<int>> make_batches(int count, int batch_size,
                                           bool drop_last);

std::string resolve_data_root(const std::string& explicit_root);

// Cache layout: <root>/<pair>/<split>.bin plus <root>/<pair>/manifest.json.
SampleSet load_sample_set(const std::string& path);
void save_sample_set(const SampleSet& set, const std::string& path);

// Internal builders, exposed for tests.
DomainPair build_synthetic_digits(const std::string& name, int resolution,
                                  int train_per_domain, int test_per_domain,
                                  std::uint64_t pair_seed);
DomainPair build_cifar_stl(const std::string& raw_root, int resolution);
SampleSet read_cifar_files(const std::vector<std::string>& paths,
                           int resolution);
SampleSet read_stl_split(const std::string& x_path, const std::string& y_path,
                         int resolution);
void bilinear_resize_u8(const std::uint8_t* src, int c, int h, int w,
                        std::uint8_t* dst, int oh, int ow);

}  // namespace ntljb
