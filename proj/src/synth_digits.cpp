#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>

#include "ntljb/domains.hpp"
#include "ntljb/rng.hpp"

// Procedural two-domain digit dataset. Both domains show the same 5x7 glyph
// classes under random affine jitter; they differ in rendering style:
//   authorized    bright glyph on a dark, nearly neutral background
//   unauthorized  glyph on a striped, ramped, blue-tinted background
// The gap is learnable (a small conv net transfers above chance) but wide
// enough that usage-control training can collapse unauthorized accuracy.
// Every sample is generated from Rng(derive(pair_seed, split, index)), so a
// rebuilt cache is byte-identical.

namespace ntljb {

namespace {

// Row-packed 5-bit masks, top row first.
constexpr std::uint8_t kGlyphs[10][7] = {
    {0x0e, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0e},  // 0
    {0x04, 0x0c, 0x04, 0x04, 0x04, 0x04, 0x0e},  // 1
    {0x0e, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1f},  // 2
    {0x1f, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0e},  // 3
    {0x02, 0x06, 0x0a, 0x12, 0x1f, 0x02, 0x02},  // 4
    {0x1f, 0x10, 0x1e, 0x01, 0x01, 0x11, 0x0e},  // 5
    {0x06, 0x08, 0x10, 0x1e, 0x11, 0x11, 0x0e},  // 6
    {0x1f, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08},  // 7
    {0x0e, 0x11, 0x11, 0x0e, 0x11, 0x11, 0x0e},  // 8
    {0x0e, 0x11, 0x11, 0x0f, 0x01, 0x02, 0x0c},  // 9
};

double glyph_cell(int cls, int cx, int cy) {
  if (cx < 0 || cx >= 5 || cy < 0 || cy >= 7) return 0.0;
  return (kGlyphs[cls][cy] >> (4 - cx)) & 1 ? 1.0 : 0.0;
}

// Bilinear sample of the glyph bitmap; (gx, gy) in cell units with the cell
// centers at integer+0.5 positions.
double glyph_sample(int cls, double gx, double gy) {
  const double u = gx - 0.5, v = gy - 0.5;
  const int x0 = static_cast<int>(std::floor(u));
  const int y0 = static_cast<int>(std::floor(v));
  const double tx = u - x0, ty = v - y0;
  const double a = glyph_cell(cls, x0, y0), b = glyph_cell(cls, x0 + 1, y0);
  const double c = glyph_cell(cls, x0, y0 + 1), d = glyph_cell(cls, x0 + 1, y0 + 1);
  return (1 - ty) * ((1 - tx) * a + tx * b) + ty * ((1 - tx) * c + tx * d);
}

void render_digit(std::uint8_t* out, int cls, bool authorized, int R,
                  Rng& rng) {
  constexpr double kDeg = std::numbers::pi / 180.0;
  const double theta = rng.uniform(-12.0 * kDeg, 12.0 * kDeg);
  const double cell = (R / 10.0) * rng.uniform(0.9, 1.3);
  const double jx = rng.uniform(-R / 16.0, R / 16.0);
  const double jy = rng.uniform(-R / 16.0, R / 16.0);
  const double edge_pow = rng.uniform(0.8, 1.25);

  double bg, fg, noise_sigma, gain[3];
  double stripe_amp = 0, stripe_freq = 0, stripe_dir = 0, stripe_phase = 0,
         ramp = 0;
  if (authorized) {
    bg = rng.uniform(0.10, 0.17);
    fg = rng.uniform(0.84, 0.92);
    for (double& g : gain) g = rng.uniform(0.97, 1.03);
    noise_sigma = 0.025;
  } else {
    bg = rng.uniform(0.40, 0.50);
    fg = rng.uniform(0.82, 0.88);
    stripe_amp = rng.uniform(0.10, 0.16);
    stripe_freq = rng.uniform(2.5, 4.5);
    stripe_dir = rng.uniform(0.0, std::numbers::pi);
    stripe_phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    ramp = rng.uniform(0.15, 0.25);
    gain[0] = rng.uniform(0.50, 0.60);
    gain[1] = rng.uniform(0.70, 0.80);
    gain[2] = rng.uniform(0.97, 1.03);
    noise_sigma = 0.02;
  }

  const double ct = std::cos(theta), st = std::sin(theta);
  const double cx = R / 2.0 + jx, cy = R / 2.0 + jy;
  const double sd_c = std::cos(stripe_dir), sd_s = std::sin(stripe_dir);
  const double two_pi = 2.0 * std::numbers::pi;

  for (int ch = 0; ch < 3; ++ch) {
    std::uint8_t* plane = out + static_cast<std::int64_t>(ch) * R * R;
    for (int py = 0; py < R; ++py)
      for (int px = 0; px < R; ++px) {
        const double dx = px + 0.5 - cx, dy = py + 0.5 - cy;
        const double rx = (ct * dx + st * dy) / cell;
        const double ry = (-st * dx + ct * dy) / cell;
        double g = glyph_sample(cls, rx + 2.5, ry + 3.5);
        if (g > 0.0) g = std::pow(g, edge_pow);
        double base = bg;
        if (!authorized) {
          base += stripe_amp * std::sin(two_pi * stripe_freq *
                                            (sd_c * py + sd_s * px) / R +
                                        stripe_phase);
          base += ramp * (static_cast<double>(px) / (R - 1) - 0.5);
        }
        double v = (base * (1.0 - g) + fg * g) * gain[ch];
        v += noise_sigma * rng.normal();
        const long q = std::lround(std::clamp(v, 0.0, 1.0) * 255.0);
        plane[py * R + px] = static_cast<std::uint8_t>(q);
      }
  }
}

SampleSet make_split(bool authorized, const std::string& split_tag, int count,
                     int R, std::uint64_t pair_seed) {
  SampleSet s;
  s.channels = 3;
  s.height = R;
  s.width = R;
  s.pixels.resize(static_cast<std::size_t>(count) * 3 * R * R);
  s.labels.resize(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    const int cls = i % 10;
    Rng rng(Rng::derive(pair_seed, split_tag, static_cast<std::uint64_t>(i)));
    render_digit(s.pixels.data() + static_cast<std::int64_t>(i) * 3 * R * R,
                 cls, authorized, R, rng);
    s.labels[static_cast<std::size_t>(i)] = cls;
  }
  return s;
}

}  // namespace

DomainPair build_synthetic_digits(const std::string& name, int resolution,
                                  int train_per_domain, int test_per_domain,
                                  std::uint64_t pair_seed) {
  DomainPair p;
  p.name = name;
  p.class_count = 10;
  for (int i = 0; i < 10; ++i) p.class_names.push_back(std::to_string(i));
  p.resolution = resolution;
  p.channels = 3;
  p.authorized_train =
      make_split(true, "authorized_train", train_per_domain, resolution, pair_seed);
  p.authorized_test =
      make_split(true, "authorized_test", test_per_domain, resolution, pair_seed);
  p.unauthorized_train = make_split(false, "unauthorized_train",
                                    train_per_domain, resolution, pair_seed);
  p.unauthorized_test = make_split(false, "unauthorized_test", test_per_domain,
                                   resolution, pair_seed);
  return p;
}

}  // namespace ntljb
