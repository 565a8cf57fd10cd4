#include "ntljb/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

#include "ntljb/bytes.hpp"
#include "ntljb/mgd.hpp"
#include "ntljb/pngio.hpp"

namespace ntljb {

namespace {

constexpr int kEntropyBins = 50;

struct Color {
  std::uint8_t r, g, b;
};

Color tag_color(const std::string& tag) {
  if (tag == "authorized") return {31, 119, 180};
  if (tag == "unauthorized") return {214, 39, 40};
  if (tag == "disguised") return {44, 160, 44};
  return {120, 120, 120};
}

void require_known_tag(const std::string& tag) {
  if (tag != "authorized" && tag != "unauthorized" && tag != "disguised")
    throw std::invalid_argument(
        "collect_stats: tag must be authorized, unauthorized, or disguised");
}

Tensor slice_rows(const Tensor& src, int first, int n) {
  const std::int64_t px =
      static_cast<std::int64_t>(src.dim(1)) * src.dim(2) * src.dim(3);
  Tensor out({n, src.dim(1), src.dim(2), src.dim(3)});
  std::memcpy(out.data(), src.data() + first * px,
              static_cast<std::size_t>(n * px) * sizeof(float));
  return out;
}

void absorb_logits(DomainStats& stats, const Tensor& logits) {
  const int rows = logits.dim(0), classes = logits.dim(1);
  for (int r = 0; r < rows; ++r) {
    const float* row = logits.data() + static_cast<std::int64_t>(r) * classes;
    stats.entropies.push_back(prediction_entropy(row, classes));
    stats.max_logits.push_back(max_logit_confidence(row, classes));
    int best = 0;
    for (int j = 1; j < classes; ++j)
      if (row[j] > row[best]) best = j;
    stats.predicted.push_back(best);
  }
}

}  // namespace

double DomainStats::mean_entropy() const {
  if (entropies.empty()) return 0.0;
  double sum = 0.0;
  for (double e : entropies) sum += e;
  return sum / static_cast<double>(entropies.size());
}

double DomainStats::balance_entropy() const {
  ClassDistribution dist;
  dist.p = proportions;
  dist.sample_count = sample_count();
  return ntljb::balance_entropy(dist);
}

DomainStats collect_stats(BlackBoxOracle& oracle, const Tensor& images,
                          const std::string& tag) {
  require_known_tag(tag);
  if (images.ndim() != 4 || images.dim(0) < 1)
    throw std::invalid_argument(
        "collect_stats: expected a non-empty {n,c,h,w} batch");
  DomainStats stats;
  stats.tag = tag;
  stats.class_count = oracle.class_count();
  const int n = images.dim(0);
  constexpr int kChunk = 128;
  for (int first = 0; first < n; first += kChunk) {
    const int take = std::min(kChunk, n - first);
    absorb_logits(stats, oracle.query(slice_rows(images, first, take)));
  }
  stats.proportions =
      class_distribution(stats.predicted, stats.class_count).p;
  return stats;
}

DomainStats collect_stats(BlackBoxOracle& oracle, const SampleSet& samples,
                          const std::string& tag) {
  require_known_tag(tag);
  if (samples.count() < 1)
    throw std::invalid_argument("collect_stats: the sample set is empty");
  DomainStats stats;
  stats.tag = tag;
  stats.class_count = oracle.class_count();
  const int n = samples.count();
  constexpr int kChunk = 128;
  for (int first = 0; first < n; first += kChunk) {
    const int take = std::min(kChunk, n - first);
    absorb_logits(stats, oracle.query(samples.batch_range(first, take)));
  }
  stats.proportions =
      class_distribution(stats.predicted, stats.class_count).p;
  return stats;
}

std::vector<double> entropy_density(const std::vector<double>& entropies,
                                    int class_count, int bins) {
  if (class_count < 2)
    throw std::invalid_argument("entropy_density: class_count must be >= 2");
  if (bins < 1) throw std::invalid_argument("entropy_density: bins must be >= 1");
  const double range = std::log(static_cast<double>(class_count));
  const double width = range / bins;
  std::vector<double> density(static_cast<std::size_t>(bins), 0.0);
  if (entropies.empty()) return density;
  for (double e : entropies) {
    if (e < 0.0 || e > range + 1e-9)
      throw std::invalid_argument(
          "entropy_density: entropy outside [0, log classes]");
    const int bin = std::min(bins - 1, static_cast<int>(e / width));
    density[static_cast<std::size_t>(bin)] += 1.0;
  }
  const double norm = static_cast<double>(entropies.size()) * width;
  for (double& d : density) d /= norm;
  return density;
}

namespace {

// Chart geometry shared by every render, so per-tag pages line up when
// flipped through.
constexpr int kW = 480, kH = 320;
constexpr int kLeft = 40, kRight = 470, kTop = 14, kBottom = 290;

void draw_frame(Canvas& c) {
  c.vline(kLeft, kTop, kBottom, 0, 0, 0);
  c.hline(kLeft, kRight, kBottom, 0, 0, 0);
  for (int i = 1; i <= 4; ++i) {
    const int y = kBottom - (kBottom - kTop) * i / 5;
    c.hline(kLeft + 1, kRight, y, 225, 225, 225);
  }
}

void draw_legend(Canvas& c, const std::vector<std::string>& tags) {
  int y = kTop + 4;
  for (const auto& tag : tags) {
    const Color col = tag_color(tag);
    c.fill_rect(kRight - 14, y, kRight - 2, y + 12, col.r, col.g, col.b);
    y += 18;
  }
}

// Maps a density to a bar height in [0, 1]; in log mode the floor is four
// decades below the peak.
double density_height(double v, double vmax, bool log_scale) {
  if (vmax <= 0.0) return 0.0;
  if (!log_scale) return v / vmax;
  const double floor = vmax * 1e-4;
  if (v <= floor) return 0.0;
  return std::log10(v / floor) / std::log10(1.0 / 1e-4);
}

void render_entropy_chart(const std::vector<const DomainStats*>& series,
                          bool log_scale, bool filled,
                          const std::string& path) {
  Canvas c(kW, kH);
  draw_frame(c);
  std::vector<std::vector<double>> densities;
  double vmax = 0.0;
  for (const DomainStats* s : series) {
    densities.push_back(
        entropy_density(s->entropies, s->class_count, kEntropyBins));
    for (double v : densities.back()) vmax = std::max(vmax, v);
  }
  const double span = kRight - kLeft;
  for (std::size_t k = 0; k < series.size(); ++k) {
    const Color col = tag_color(series[k]->tag);
    int prev_top = kBottom;
    for (int b = 0; b < kEntropyBins; ++b) {
      const int x0 = kLeft + static_cast<int>(span * b / kEntropyBins);
      const int x1 = kLeft + static_cast<int>(span * (b + 1) / kEntropyBins);
      const double h = density_height(densities[k][static_cast<std::size_t>(b)],
                                      vmax, log_scale);
      const int top = kBottom - static_cast<int>((kBottom - kTop - 2) * h);
      if (filled) {
        c.fill_rect(x0 + 1, top, x1, kBottom, col.r, col.g, col.b);
      } else {
        // Step outline: one horizontal run per bin, vertical risers between.
        c.hline(x0, x1, top, col.r, col.g, col.b);
        c.vline(x0, std::min(prev_top, top), std::max(prev_top, top), col.r,
                col.g, col.b);
      }
      prev_top = top;
    }
    if (!filled) c.vline(kRight, prev_top, kBottom, col.r, col.g, col.b);
  }
  std::vector<std::string> tags;
  for (const DomainStats* s : series) tags.push_back(s->tag);
  draw_legend(c, tags);
  write_png(c, path);
}

void render_balance_chart(const std::vector<const DomainStats*>& series,
                          const std::string& path) {
  Canvas c(kW, kH);
  draw_frame(c);
  const int classes = series.front()->class_count;
  const double span = kRight - kLeft;
  const int lanes = static_cast<int>(series.size());
  for (int cls = 0; cls < classes; ++cls) {
    const int g0 = kLeft + static_cast<int>(span * cls / classes);
    const int g1 = kLeft + static_cast<int>(span * (cls + 1) / classes);
    const int lane_w = std::max(1, (g1 - g0 - 2) / lanes);
    for (int k = 0; k < lanes; ++k) {
      const Color col = tag_color(series[static_cast<std::size_t>(k)]->tag);
      const double p =
          series[static_cast<std::size_t>(k)]->proportions[static_cast<std::size_t>(cls)];
      const int top = kBottom - static_cast<int>((kBottom - kTop - 2) * p);
      const int x0 = g0 + 1 + k * lane_w;
      c.fill_rect(x0, top, std::min(x0 + lane_w, g1), kBottom, col.r, col.g,
                  col.b);
    }
  }
  std::vector<std::string> tags;
  for (const DomainStats* s : series) tags.push_back(s->tag);
  draw_legend(c, tags);
  write_png(c, path);
}

std::string stats_csv(const DomainStats& s) {
  std::string out = "sample_index,entropy,max_logit,predicted_class\n";
  for (int i = 0; i < s.sample_count(); ++i) {
    out += std::to_string(i);
    out += ',';
    out += format_double(s.entropies[static_cast<std::size_t>(i)]);
    out += ',';
    out += format_double(s.max_logits[static_cast<std::size_t>(i)]);
    out += ',';
    out += std::to_string(s.predicted[static_cast<std::size_t>(i)]);
    out += '\n';
  }
  return out;
}

}  // namespace

void export_stats(const std::vector<DomainStats>& stats,
                  const std::string& out_dir, bool log_density) {
  if (stats.empty())
    throw std::invalid_argument("export_stats: need at least one stats object");
  for (std::size_t i = 0; i < stats.size(); ++i) {
    if (stats[i].class_count != stats.front().class_count)
      throw std::invalid_argument("export_stats: class counts differ");
    for (std::size_t j = i + 1; j < stats.size(); ++j)
      if (stats[i].tag == stats[j].tag)
        throw std::invalid_argument("export_stats: duplicate tag '" +
                                    stats[i].tag + "'");
  }
  ensure_dir(out_dir);

  std::vector<const DomainStats*> all;
  for (const DomainStats& s : stats) all.push_back(&s);
  for (const DomainStats& s : stats) {
    write_text_file(out_dir + "/" + s.tag + ".csv", stats_csv(s));
    render_entropy_chart({&s}, log_density, true,
                         out_dir + "/" + s.tag + "_entropy.png");
    render_balance_chart({&s}, out_dir + "/" + s.tag + "_balance.png");
  }
  render_entropy_chart(all, log_density, false,
                       out_dir + "/comparison_entropy.png");
  render_balance_chart(all, out_dir + "/comparison_balance.png");
}

}  // namespace ntljb
