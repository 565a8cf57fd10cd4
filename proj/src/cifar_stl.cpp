#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ntljb/bytes.hpp"
#include "ntljb/domains.hpp"

// Readers for the standard CIFAR-10 and STL-10 binary archives, remapped to
// a shared label vocabulary in CIFAR order. STL's "car" matches CIFAR's
// "automobile"; the remaining unshared pair (CIFAR "frog", STL "monkey") is
// aligned at index 6 by the usual convention for this domain pair, leaving
// all ten indices usable on both sides. Record counts are derived from file
// size, so truncated archives (and small test fixtures) parse exactly or
// fail loudly.

namespace ntljb {

namespace {

std::vector<std::uint8_t> read_binary(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f)
    throw std::runtime_error(
        "missing data file: " + path +
        " (place the raw archives under <data_root>/raw; see README)");
  return std::vector<std::uint8_t>((std::istreambuf_iterator<char>(f)),
                                   std::istreambuf_iterator<char>());
}

// STL labels (alphabetical order, 1-based on disk) to CIFAR indices.
constexpr int kStlToCifar[10] = {0, 2, 1, 3, 4, 5, 7, 6, 8, 9};

void append_resized(SampleSet& set, const std::uint8_t* rgb, int side,
                    int resolution) {
  const std::size_t out_px = static_cast<std::size_t>(3) * resolution * resolution;
  const std::size_t at = set.pixels.size();
  set.pixels.resize(at + out_px);
  if (side == resolution) {
    std::copy(rgb, rgb + out_px, set.pixels.begin() + static_cast<std::ptrdiff_t>(at));
  } else {
    bilinear_resize_u8(rgb, 3, side, side, set.pixels.data() + at, resolution,
                       resolution);
  }
}

}  // namespace

SampleSet read_cifar_files(const std::vector<std::string>& paths,
                           int resolution) {
  constexpr int kRecord = 1 + 3 * 32 * 32;
  SampleSet set;
  set.channels = 3;
  set.height = resolution;
  set.width = resolution;
  for (const auto& path : paths) {
    const auto bytes = read_binary(path);
    if (bytes.empty() || bytes.size() % kRecord != 0)
      throw std::runtime_error("corrupt CIFAR batch (size " +
                               std::to_string(bytes.size()) +
                               " not a multiple of " + std::to_string(kRecord) +
                               "): " + path);
    const std::size_t records = bytes.size() / kRecord;
    for (std::size_t r = 0; r < records; ++r) {
      const std::uint8_t* rec = bytes.data() + r * kRecord;
      const int label = rec[0];
      if (label > 9)
        throw std::runtime_error("CIFAR label out of range in " + path);
      set.labels.push_back(label);
      append_resized(set, rec + 1, 32, resolution);
    }
  }
  return set;
}

SampleSet read_stl_split(const std::string& x_path, const std::string& y_path,
                         int resolution) {
  constexpr int kSide = 96;
  constexpr std::size_t kImage = 3 * kSide * kSide;
  const auto xs = read_binary(x_path);
  const auto ys = read_binary(y_path);
  if (xs.empty() || xs.size() % kImage != 0)
    throw std::runtime_error("corrupt STL image file (size " +
                             std::to_string(xs.size()) + "): " + x_path);
  const std::size_t count = xs.size() / kImage;
  if (ys.size() != count)
    throw std::runtime_error("STL label count " + std::to_string(ys.size()) +
                             " does not match image count " +
                             std::to_string(count) + ": " + y_path);
  SampleSet set;
  set.channels = 3;
  set.height = resolution;
  set.width = resolution;
  std::vector<std::uint8_t> row_major(kImage);
  for (std::size_t r = 0; r < count; ++r) {
    const int raw = ys[r];
    if (raw < 1 || raw > 10)
      throw std::runtime_error("STL label out of range in " + y_path);
    set.labels.push_back(kStlToCifar[raw - 1]);
    // STL planes are column-major; transpose each channel.
    const std::uint8_t* img = xs.data() + r * kImage;
    for (int c = 0; c < 3; ++c) {
      const std::uint8_t* plane = img + static_cast<std::size_t>(c) * kSide * kSide;
      std::uint8_t* out = row_major.data() + static_cast<std::size_t>(c) * kSide * kSide;
      for (int y = 0; y < kSide; ++y)
        for (int x = 0; x < kSide; ++x) out[y * kSide + x] = plane[x * kSide + y];
    }
    append_resized(set, row_major.data(), kSide, resolution);
  }
  return set;
}

DomainPair build_cifar_stl(const std::string& raw_root, int resolution) {
  const std::string cifar = raw_root + "/cifar-10-batches-bin";
  const std::string stl = raw_root + "/stl10_binary";

  std::vector<std::string> train_batches;
  for (int i = 1; i <= 5; ++i)
    train_batches.push_back(cifar + "/data_batch_" + std::to_string(i) + ".bin");

  DomainPair p;
  p.name = "cifar10_stl10";
  p.class_count = 10;
  p.class_names = {"airplane", "automobile/car", "bird",        "cat",
                   "deer",     "dog",            "frog/monkey", "horse",
                   "ship",     "truck"};
  p.resolution = resolution;
  p.channels = 3;
  p.authorized_train = read_cifar_files(train_batches, resolution);
  p.authorized_test = read_cifar_files({cifar + "/test_batch.bin"}, resolution);
  p.unauthorized_train =
      read_stl_split(stl + "/train_X.bin", stl + "/train_y.bin", resolution);
  p.unauthorized_test =
      read_stl_split(stl + "/test_X.bin", stl + "/test_y.bin", resolution);
  return p;
}

}  // namespace ntljb
