#include "ntljb/domains.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <stdexcept>

#include "ntljb/bytes.hpp"
#include "ntljb/rng.hpp"
#include "ntljb/sha256.hpp"

#include <nlohmann/json.hpp>

namespace ntljb {

using nlohmann::json;

float normalize_pixel(std::uint8_t x) {
  return (2.0f * static_cast<float>(x) - 255.0f) / 255.0f;
}

std::uint8_t denormalize_pixel(float v) {
  const long r = std::lround((255.0f * v + 255.0f) / 2.0f);
  return static_cast<std::uint8_t>(std::clamp(r, 0l, 255l));
}

Tensor SampleSet::batch(const std::vector<int>& indices) const {
  if (indices.empty()) throw std::invalid_argument("batch: empty index list");
  Tensor t({static_cast<int>(indices.size()), channels, height, width});
  const std::int64_t per = pixels_per_image();
  float* out = t.data();
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const int idx = indices[k];
    if (idx < 0 || idx >= count())
      throw std::out_of_range("batch: sample index out of range");
    const std::uint8_t* src = pixels.data() + per * idx;
    float* dst = out + per * static_cast<std::int64_t>(k);
    for (std::int64_t i = 0; i < per; ++i) dst[i] = normalize_pixel(src[i]);
  }
  return t;
}

Tensor SampleSet::batch_range(int first, int n) const {
  std::vector<int> idx(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = first + i;
  return batch(idx);
}

std::vector<int> SampleSet::labels_for(const std::vector<int>& indices) const {
  if (!labeled()) throw std::logic_error("labels_for: unlabeled sample set");
  std::vector<int> out;
  out.reserve(indices.size());
  for (int idx : indices) out.push_back(labels[static_cast<std::size_t>(idx)]);
  return out;
}

SampleSet SampleSet::without_labels() const {
  SampleSet s = *this;
  s.labels.clear();
  return s;
}

std::string SampleSet::content_digest() const {
  Sha256 h;
  const std::int32_t dims[3] = {channels, height, width};
  h.update(dims, sizeof(dims));
  h.update(pixels.data(), pixels.size());
  if (labeled()) h.update(labels.data(), labels.size() * sizeof(int));
  return h.finish_hex();
}

// ---- binary cache ----

namespace {
constexpr char kDataMagic[8] = {'N', 'T', 'J', 'B', 'D', 'A', 'T', '1'};
}

void save_sample_set(const SampleSet& set, const std::string& path) {
  ByteWriter w;
  w.bytes(kDataMagic, sizeof(kDataMagic));
  w.u32(static_cast<std::uint32_t>(set.count()));
  w.u32(static_cast<std::uint32_t>(set.channels));
  w.u32(static_cast<std::uint32_t>(set.height));
  w.u32(static_cast<std::uint32_t>(set.width));
  w.u8(set.labeled() ? 1 : 0);
  w.bytes(set.pixels.data(), set.pixels.size());
  if (set.labeled())
    for (int l : set.labels) w.i32(l);
  w.write_file(path);
}

SampleSet load_sample_set(const std::string& path) {
  ByteReader r = ByteReader::from_file(path);
  char magic[8];
  r.bytes(magic, sizeof(magic));
  if (std::memcmp(magic, kDataMagic, sizeof(magic)) != 0)
    throw std::runtime_error("not a sample-set file: " + path);
  SampleSet s;
  const std::uint32_t count = r.u32();
  s.channels = static_cast<int>(r.u32());
  s.height = static_cast<int>(r.u32());
  s.width = static_cast<int>(r.u32());
  const bool labeled = r.u8() != 0;
  if (s.channels <= 0 || s.height <= 0 || s.width <= 0)
    throw std::runtime_error("corrupt sample-set header: " + path);
  const std::size_t px = static_cast<std::size_t>(count) * s.pixels_per_image();
  s.pixels.resize(px);
  r.bytes(s.pixels.data(), px);
  if (labeled) {
    s.labels.resize(count);
    for (std::uint32_t i = 0; i < count; ++i) s.labels[i] = r.i32();
  }
  if (!r.at_end()) throw std::runtime_error("trailing bytes in " + path);
  return s;
}

// ---- registry ----

namespace {

struct PairSpec {
  const char* name;
  int resolution;
  int train_per_domain;
  int test_per_domain;
  std::uint64_t seed;
  bool synthetic;
};

constexpr PairSpec kPairs[] = {
    {"digits_small", 32, 3000, 600, 2024001, true},
    {"digits_micro", 16, 300, 120, 2024002, true},
    {"cifar10_stl10", 32, 0, 0, 0, false},
};

const PairSpec* find_pair(const std::string& name) {
  for (const auto& p : kPairs)
    if (name == p.name) return &p;
  return nullptr;
}

const char* kSplitNames[4] = {"authorized_train", "authorized_test",
                              "unauthorized_train", "unauthorized_test"};

SampleSet* split_of(DomainPair& p, int i) {
  switch (i) {
    case 0: return &p.authorized_train;
    case 1: return &p.authorized_test;
    case 2: return &p.unauthorized_train;
    default: return &p.unauthorized_test;
  }
}

const SampleSet* split_of(const DomainPair& p, int i) {
  switch (i) {
    case 0: return &p.authorized_train;
    case 1: return &p.authorized_test;
    case 2: return &p.unauthorized_train;
    default: return &p.unauthorized_test;
  }
}

void write_manifest(const DomainPair& pair, const std::string& dir) {
  json m;
  m["pair"] = pair.name;
  m["class_count"] = pair.class_count;
  m["class_names"] = pair.class_names;
  m["resolution"] = pair.resolution;
  m["channels"] = pair.channels;
  json splits = json::object();
  for (int i = 0; i < 4; ++i) {
    const SampleSet* s = split_of(pair, i);
    splits[kSplitNames[i]] = {{"count", s->count()},
                              {"digest", s->content_digest()},
                              {"labeled", s->labeled()}};
  }
  m["splits"] = splits;
  write_text_file(dir + "/manifest.json", m.dump(2) + "\n");
}

bool try_load_cached(DomainPair& pair, const std::string& dir) {
  const std::string mpath = dir + "/manifest.json";
  if (!file_exists(mpath)) return false;
  json m = json::parse(read_text_file(mpath));
  if (m.at("pair").get<std::string>() != pair.name) return false;
  if (m.at("resolution").get<int>() != pair.resolution) return false;
  pair.class_count = m.at("class_count").get<int>();
  pair.class_names = m.at("class_names").get<std::vector<std::string>>();
  pair.channels = m.at("channels").get<int>();
  for (int i = 0; i < 4; ++i) {
    const std::string p = dir + "/" + kSplitNames[i] + ".bin";
    if (!file_exists(p)) return false;
    *split_of(pair, i) = load_sample_set(p);
  }
  return true;
}

void store_pair(const DomainPair& pair, const std::string& dir) {
  ensure_dir(dir);
  for (int i = 0; i < 4; ++i)
    save_sample_set(*split_of(pair, i), dir + "/" + kSplitNames[i] + ".bin");
  write_manifest(pair, dir);
}

}  // namespace

std::vector<std::string> available_pairs() {
  std::vector<std::string> out;
  for (const auto& p : kPairs) out.emplace_back(p.name);
  return out;
}

std::string resolve_data_root(const std::string& explicit_root) {
  if (!explicit_root.empty()) return explicit_root;
  if (const char* env = std::getenv("NTLJB_DATA_ROOT"); env && *env)
    return env;
  return "./data";
}

DomainPair load_domain_pair(const std::string& name,
                            const std::string& data_root) {
  const PairSpec* spec = find_pair(name);
  if (!spec) {
    std::string known;
    for (const auto& p : kPairs) known += std::string(" ") + p.name;
    throw std::invalid_argument("unknown domain pair '" + name +
                                "'; available:" + known);
  }
  const std::string root = resolve_data_root(data_root);
  const std::string dir = root + "/" + name;

  DomainPair pair;
  pair.name = name;
  pair.resolution = spec->resolution;
  if (try_load_cached(pair, dir)) return pair;

  DomainPair built =
      spec->synthetic
          ? build_synthetic_digits(name, spec->resolution,
                                   spec->train_per_domain,
                                   spec->test_per_domain, spec->seed)
          : build_cifar_stl(root + "/raw", spec->resolution);
  store_pair(built, dir);
  return built;
}

AttackerDataView take_authorized_subset(const DomainPair& pair,
                                        double fraction, std::uint64_t seed) {
  const SampleSet& train = pair.authorized_train;
  if (!(fraction > 0.0) || fraction > 1.0)
    throw std::invalid_argument("subset fraction must be in (0, 1]");
  if (!train.labeled())
    throw std::invalid_argument("authorized train split must be labeled");
  const int n = train.count();
  const int total = static_cast<int>(std::ceil(fraction * n));

  std::vector<std::vector<int>> by_class(
      static_cast<std::size_t>(pair.class_count));
  for (int i = 0; i < n; ++i) {
    const int y = train.labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= pair.class_count)
      throw std::runtime_error("label out of range in authorized train split");
    by_class[static_cast<std::size_t>(y)].push_back(i);
  }

  // Largest-remainder allocation of `total` seats over classes.
  std::vector<int> take(static_cast<std::size_t>(pair.class_count), 0);
  std::vector<std::pair<double, int>> frac;
  int assigned = 0;
  for (int c = 0; c < pair.class_count; ++c) {
    const double exact =
        fraction * static_cast<double>(by_class[static_cast<std::size_t>(c)].size());
    take[static_cast<std::size_t>(c)] = static_cast<int>(std::floor(exact));
    assigned += take[static_cast<std::size_t>(c)];
    frac.emplace_back(exact - std::floor(exact), c);
  }
  std::stable_sort(frac.begin(), frac.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  for (std::size_t k = 0; assigned < total && k < frac.size(); ++k) {
    const int c = frac[k].second;
    if (take[static_cast<std::size_t>(c)] <
        static_cast<int>(by_class[static_cast<std::size_t>(c)].size())) {
      ++take[static_cast<std::size_t>(c)];
      ++assigned;
    }
  }
  if (assigned < total)
    throw std::runtime_error("subset larger than available samples");

  Rng rng(Rng::derive(seed, "authorized_subset"));
  std::vector<int> chosen;
  for (int c = 0; c < pair.class_count; ++c) {
    auto& pool = by_class[static_cast<std::size_t>(c)];
    rng.shuffle(pool);
    for (int k = 0; k < take[static_cast<std::size_t>(c)]; ++k)
      chosen.push_back(pool[static_cast<std::size_t>(k)]);
  }
  std::sort(chosen.begin(), chosen.end());

  AttackerDataView view;
  view.authorized_subset.channels = train.channels;
  view.authorized_subset.height = train.height;
  view.authorized_subset.width = train.width;
  const std::int64_t per = train.pixels_per_image();
  for (int idx : chosen) {
    const std::uint8_t* src = train.pixels.data() + per * idx;
    view.authorized_subset.pixels.insert(view.authorized_subset.pixels.end(),
                                         src, src + per);
    view.authorized_subset.labels.push_back(
        train.labels[static_cast<std::size_t>(idx)]);
  }
  view.unauthorized_pool = pair.unauthorized_test.without_labels();
  return view;
}

std::vector<std::vector<int>> make_batches(int count, int batch_size,
                                           bool drop_last) {
  if (count < 0) throw std::invalid_argument("make_batches: negative count");
  if (batch_size <= 0)
    throw std::invalid_argument("make_batches: batch_size must be positive");
  std::vector<std::vector<int>> out;
  for (int start = 0; start < count; start += batch_size) {
    const int n = std::min(batch_size, count - start);
    if (n < batch_size && drop_last) break;
    std::vector<int> b(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) b[static_cast<std::size_t>(i)] = start + i;
    out.push_back(std::move(b));
  }
  return out;
}

void bilinear_resize_u8(const std::uint8_t* src, int c, int h, int w,
                        std::uint8_t* dst, int oh, int ow) {
  const double sy = static_cast<double>(h) / oh;
  const double sx = static_cast<double>(w) / ow;
  for (int ch = 0; ch < c; ++ch) {
    const std::uint8_t* plane = src + static_cast<std::int64_t>(ch) * h * w;
    std::uint8_t* out = dst + static_cast<std::int64_t>(ch) * oh * ow;
    for (int y = 0; y < oh; ++y) {
      const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0,
                                   static_cast<double>(h - 1));
      const int y0 = static_cast<int>(fy);
      const int y1 = std::min(y0 + 1, h - 1);
      const double wy = fy - y0;
      for (int x = 0; x < ow; ++x) {
        const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0,
                                     static_cast<double>(w - 1));
        const int x0 = static_cast<int>(fx);
        const int x1 = std::min(x0 + 1, w - 1);
        const double wx = fx - x0;
        const double v =
            (1 - wy) * ((1 - wx) * plane[y0 * w + x0] + wx * plane[y0 * w + x1]) +
            wy * ((1 - wx) * plane[y1 * w + x0] + wx * plane[y1 * w + x1]);
        out[y * ow + x] =
            static_cast<std::uint8_t>(std::clamp(std::lround(v), 0l, 255l));
      }
    }
  }
}

}  // namespace ntljb
