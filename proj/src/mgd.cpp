#include "ntljb/mgd.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ntljb {

namespace {

void require_finite_row(const float* v, int n, const char* what) {
  for (int i = 0; i < n; ++i)
    if (!std::isfinite(v[i]))
      throw std::invalid_argument(std::string(what) + ": non-finite input");
}

int argmax_row(const float* row, int n) {
  int best = 0;
  for (int i = 1; i < n; ++i)
    if (row[i] > row[best]) best = i;
  return best;
}

}  // namespace

double prediction_entropy(const float* logits, int count) {
  if (count < 1)
    throw std::invalid_argument("prediction_entropy: empty logit vector");
  require_finite_row(logits, count, "prediction_entropy");
  double m = logits[0];
  for (int i = 1; i < count; ++i) m = std::max(m, static_cast<double>(logits[i]));
  double s = 0.0;
  for (int i = 0; i < count; ++i) s += std::exp(logits[i] - m);
  double e = 0.0;
  for (int i = 0; i < count; ++i) {
    const double p = std::exp(logits[i] - m) / s;
    if (p > 0.0) e -= p * std::log(p);
  }
  return std::max(e, 0.0);
}

double prediction_entropy(const std::vector<float>& logits) {
  return prediction_entropy(logits.data(), static_cast<int>(logits.size()));
}

double max_logit_confidence(const float* logits, int count) {
  if (count < 1)
    throw std::invalid_argument("max_logit_confidence: empty logit vector");
  require_finite_row(logits, count, "max_logit_confidence");
  double m = logits[0];
  for (int i = 1; i < count; ++i) m = std::max(m, static_cast<double>(logits[i]));
  return m;
}

double max_logit_confidence(const std::vector<float>& logits) {
  return max_logit_confidence(logits.data(), static_cast<int>(logits.size()));
}

std::vector<double> row_entropies(const Tensor& logits) {
  if (logits.ndim() != 2)
    throw std::invalid_argument("row_entropies: expected n x C logits");
  const int n = logits.dim(0), c = logits.dim(1);
  std::vector<double> out(static_cast<std::size_t>(n));
  for (int r = 0; r < n; ++r)
    out[static_cast<std::size_t>(r)] =
        prediction_entropy(logits.data() + static_cast<std::int64_t>(r) * c, c);
  return out;
}

double confidence_loss(const Tensor& logits_a, const Tensor& logits_d) {
  if (logits_a.ndim() != 2 || logits_d.ndim() != 2 ||
      logits_a.dim(1) != logits_d.dim(1))
    throw std::invalid_argument("confidence_loss: class counts differ");
  if (logits_a.dim(0) != logits_d.dim(0))
    throw std::invalid_argument("confidence_loss: batch sizes differ");
  const std::vector<double> ea = row_entropies(logits_a);
  const std::vector<double> ed = row_entropies(logits_d);
  double s = 0.0;
  for (std::size_t i = 0; i < ea.size(); ++i) s += std::abs(ea[i] - ed[i]);
  return s / static_cast<double>(ea.size());
}

ClassDistribution class_distribution(const std::vector<int>& labels,
                                     int class_count) {
  if (class_count < 1)
    throw std::invalid_argument("class_distribution: bad class count");
  if (labels.empty())
    throw std::invalid_argument("class_distribution: empty label set");
  std::vector<std::int64_t> counts(static_cast<std::size_t>(class_count), 0);
  for (int l : labels) {
    if (l < 0 || l >= class_count)
      throw std::invalid_argument("class_distribution: label " +
                                  std::to_string(l) + " outside [0, " +
                                  std::to_string(class_count) + ")");
    counts[static_cast<std::size_t>(l)] += 1;
  }
  ClassDistribution d;
  d.sample_count = static_cast<int>(labels.size());
  d.p.resize(static_cast<std::size_t>(class_count));
  for (int i = 0; i < class_count; ++i)
    d.p[static_cast<std::size_t>(i)] =
        static_cast<double>(counts[static_cast<std::size_t>(i)]) /
        static_cast<double>(labels.size());
  return d;
}

ClassDistribution soft_class_distribution(const Tensor& logits) {
  if (logits.ndim() != 2 || logits.dim(0) < 1)
    throw std::invalid_argument("soft_class_distribution: empty logits");
  const int n = logits.dim(0), c = logits.dim(1);
  ClassDistribution d;
  d.sample_count = n;
  d.p.assign(static_cast<std::size_t>(c), 0.0);
  for (int r = 0; r < n; ++r) {
    const float* z = logits.data() + static_cast<std::int64_t>(r) * c;
    require_finite_row(z, c, "soft_class_distribution");
    double m = z[0];
    for (int i = 1; i < c; ++i) m = std::max(m, static_cast<double>(z[i]));
    double s = 0.0;
    for (int i = 0; i < c; ++i) s += std::exp(z[i] - m);
    for (int i = 0; i < c; ++i)
      d.p[static_cast<std::size_t>(i)] += std::exp(z[i] - m) / s;
  }
  for (double& v : d.p) v /= n;
  return d;
}

double balance_entropy(const ClassDistribution& dist) {
  if (dist.p.empty())
    throw std::invalid_argument("balance_entropy: empty distribution");
  double sum = 0.0;
  for (double v : dist.p) {
    if (v < 0.0)
      throw std::invalid_argument("balance_entropy: negative probability");
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-9)
    throw std::invalid_argument("balance_entropy: probabilities sum to " +
                                std::to_string(sum));
  double e = 0.0;
  for (double v : dist.p)
    if (v > 0.0) e -= v * std::log(v);
  return std::max(e, 0.0);
}

double class_balance_loss(const ClassDistribution& disguised,
                          const ClassDistribution& authorized) {
  if (disguised.classes() != authorized.classes())
    throw std::invalid_argument("class_balance_loss: class counts differ");
  return std::abs(balance_entropy(disguised) - balance_entropy(authorized));
}

namespace {

// Row softmax in double: p and log p, max-shifted.
void softmax_row(const float* row, int c, std::vector<double>& p,
                 std::vector<double>& lp) {
  double m = row[0];
  for (int j = 1; j < c; ++j) m = std::max(m, static_cast<double>(row[j]));
  double z = 0.0;
  for (int j = 0; j < c; ++j) z += std::exp(row[j] - m);
  const double logz = std::log(z);
  for (int j = 0; j < c; ++j) {
    lp[static_cast<std::size_t>(j)] = row[j] - m - logz;
    p[static_cast<std::size_t>(j)] = std::exp(lp[static_cast<std::size_t>(j)]);
  }
}

double sign_of(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

}  // namespace

Tensor confidence_loss_grad(const Tensor& logits_d, const Tensor& logits_a) {
  if (logits_d.ndim() != 2 || !logits_d.same_shape(logits_a))
    throw std::invalid_argument(
        "confidence_loss_grad: logits must be {n,classes} and share a shape");
  const int n = logits_d.dim(0), c = logits_d.dim(1);
  Tensor g({n, c});
  std::vector<double> p(static_cast<std::size_t>(c));
  std::vector<double> lp(static_cast<std::size_t>(c));
  for (int r = 0; r < n; ++r) {
    const float* drow = logits_d.data() + static_cast<std::int64_t>(r) * c;
    const float* arow = logits_a.data() + static_cast<std::int64_t>(r) * c;
    require_finite_row(drow, c, "confidence_loss_grad");
    softmax_row(drow, c, p, lp);
    double hd = 0.0;
    for (int j = 0; j < c; ++j) {
      const double pj = p[static_cast<std::size_t>(j)];
      if (pj > 0.0) hd -= pj * lp[static_cast<std::size_t>(j)];
    }
    hd = std::max(hd, 0.0);
    // d|H_d - H_a|/dz_j = sign(H_d - H_a) * (-p_j (log p_j + H_d)).
    // Both entropies go through prediction_entropy so identical rows give an
    // exactly-zero sign (the subgradient at the kink), not rounding noise.
    const double s = sign_of(prediction_entropy(drow, c) -
                             prediction_entropy(arow, c)) /
                     static_cast<double>(n);
    for (int j = 0; j < c; ++j) {
      const double pj = p[static_cast<std::size_t>(j)];
      const double d =
          pj > 0.0 ? -pj * (lp[static_cast<std::size_t>(j)] + hd) : 0.0;
      g[static_cast<std::int64_t>(r) * c + j] = static_cast<float>(s * d);
    }
  }
  return g;
}

Tensor class_balance_loss_grad(const Tensor& logits_d,
                               const ClassDistribution& authorized) {
  if (logits_d.ndim() != 2 || logits_d.dim(0) < 1)
    throw std::invalid_argument(
        "class_balance_loss_grad: logits must be a non-empty {n,classes}");
  const int n = logits_d.dim(0), c = logits_d.dim(1);
  if (c != authorized.classes())
    throw std::invalid_argument("class_balance_loss_grad: class counts differ");
  std::vector<double> probs(static_cast<std::size_t>(n) * c);
  std::vector<double> p(static_cast<std::size_t>(c));
  std::vector<double> lp(static_cast<std::size_t>(c));
  std::vector<double> pool(static_cast<std::size_t>(c), 0.0);
  for (int r = 0; r < n; ++r) {
    const float* row = logits_d.data() + static_cast<std::int64_t>(r) * c;
    require_finite_row(row, c, "class_balance_loss_grad");
    softmax_row(row, c, p, lp);
    for (int j = 0; j < c; ++j) {
      probs[static_cast<std::size_t>(r) * c + j] = p[static_cast<std::size_t>(j)];
      pool[static_cast<std::size_t>(j)] += p[static_cast<std::size_t>(j)] / n;
    }
  }
  // Soft counts give every class positive mass, so log is safe.
  std::vector<double> logpool(static_cast<std::size_t>(c));
  for (int j = 0; j < c; ++j)
    logpool[static_cast<std::size_t>(j)] =
        std::log(pool[static_cast<std::size_t>(j)]);
  // The disguised-side entropy uses the same public path as the loss so a
  // distribution equal to the target yields an exactly-zero sign.
  const double s = sign_of(balance_entropy(soft_class_distribution(logits_d)) -
                           balance_entropy(authorized));
  Tensor g({n, c});
  for (int r = 0; r < n; ++r) {
    double rowdot = 0.0;
    for (int j = 0; j < c; ++j)
      rowdot += probs[static_cast<std::size_t>(r) * c + j] *
                logpool[static_cast<std::size_t>(j)];
    for (int k = 0; k < c; ++k) {
      const double pk = probs[static_cast<std::size_t>(r) * c + k];
      g[static_cast<std::int64_t>(r) * c + k] = static_cast<float>(
          s * (-pk / n) * (logpool[static_cast<std::size_t>(k)] - rowdot));
    }
  }
  return g;
}

double total_loss(double did, double l_cf, double l_ba,
                  const DisguiseWeights& weights) {
  for (double v : {did, l_cf, l_ba})
    if (!std::isfinite(v))
      throw std::invalid_argument("total_loss: non-finite term");
  if (weights.lambda_cf < 0.0 || weights.lambda_ba < 0.0)
    throw std::invalid_argument("total_loss: negative weight");
  return did + weights.lambda_cf * l_cf + weights.lambda_ba * l_ba;
}

// ---- zero-order gradients ----

namespace {

double checked_eval(const std::function<double(const Tensor&)>& loss,
                    const Tensor& x) {
  const double v = loss(x);
  if (!std::isfinite(v))
    throw std::runtime_error("zo_gradient: non-finite loss evaluation");
  return v;
}

}  // namespace

Tensor zo_gradient(const std::function<double(const Tensor&)>& loss,
                   const Tensor& images, const ZoConfig& cfg, Rng& rng) {
  if (!loss) throw std::invalid_argument("zo_gradient: null loss");
  if (cfg.probe_count < 1)
    throw std::invalid_argument("zo_gradient: probe_count must be >= 1");
  if (!(cfg.step > 0.0))
    throw std::invalid_argument("zo_gradient: step must be > 0");
  const std::int64_t d = images.numel();
  if (d == 0) throw std::invalid_argument("zo_gradient: empty input");

  Tensor grad(images.shape());
  grad.zero();

  if (cfg.scheme == ZoScheme::coordinate_subset) {
    if (cfg.probe_count > d)
      throw std::invalid_argument(
          "zo_gradient: coordinate scheme needs probe_count <= dimensionality");
    std::vector<int> perm = rng.permutation(static_cast<int>(d));
    Tensor scratch = images;
    for (int k = 0; k < cfg.probe_count; ++k) {
      const std::int64_t j = perm[static_cast<std::size_t>(k)];
      const float original = scratch[j];
      const float plus = static_cast<float>(original + cfg.step);
      const float minus = static_cast<float>(original - cfg.step);
      scratch[j] = plus;
      const double lp = checked_eval(loss, scratch);
      scratch[j] = minus;
      const double lm = checked_eval(loss, scratch);
      scratch[j] = original;
      // Divide by the step that was actually realized in float storage;
      // this keeps central differences exact on quadratics.
      const double realized = static_cast<double>(plus) - minus;
      grad[j] = static_cast<float>((lp - lm) / realized);
    }
    return grad;
  }

  // Antithetic spherical probes: one unit direction costs two evaluations,
  // and the difference quotient is scaled back up by the dimensionality.
  std::vector<double> acc(static_cast<std::size_t>(d), 0.0);
  std::vector<double> u(static_cast<std::size_t>(d));
  Tensor probe(images.shape());
  const double h = cfg.step;
  for (int k = 0; k < cfg.probe_count; ++k) {
    double norm_sq = 0.0;
    for (std::int64_t i = 0; i < d; ++i) {
      const double g = rng.normal();
      u[static_cast<std::size_t>(i)] = g;
      norm_sq += g * g;
    }
    const double norm = std::sqrt(norm_sq);
    if (!(norm > 0.0))
      throw std::logic_error("zo_gradient: degenerate probe direction");
    for (std::int64_t i = 0; i < d; ++i)
      u[static_cast<std::size_t>(i)] /= norm;

    for (std::int64_t i = 0; i < d; ++i)
      probe[i] = static_cast<float>(images[i] + h * u[static_cast<std::size_t>(i)]);
    const double lp = checked_eval(loss, probe);
    for (std::int64_t i = 0; i < d; ++i)
      probe[i] = static_cast<float>(images[i] - h * u[static_cast<std::size_t>(i)]);
    const double lm = checked_eval(loss, probe);

    const double coeff = (lp - lm) / (2.0 * h) * static_cast<double>(d) /
                         static_cast<double>(cfg.probe_count);
    for (std::int64_t i = 0; i < d; ++i)
      acc[static_cast<std::size_t>(i)] += coeff * u[static_cast<std::size_t>(i)];
  }
  for (std::int64_t i = 0; i < d; ++i)
    grad[i] = static_cast<float>(acc[static_cast<std::size_t>(i)]);
  return grad;
}

// ---- oracle-driven guidance hook ----

namespace {

Tensor clamp_unit(const Tensor& x) {
  Tensor out = x;
  float* p = out.data();
  for (std::int64_t i = 0; i < out.numel(); ++i)
    p[i] = std::min(std::max(p[i], -1.0f), 1.0f);
  return out;
}

std::vector<int> argmax_rows(const Tensor& logits) {
  const int n = logits.dim(0), c = logits.dim(1);
  std::vector<int> out(static_cast<std::size_t>(n));
  for (int r = 0; r < n; ++r)
    out[static_cast<std::size_t>(r)] =
        argmax_row(logits.data() + static_cast<std::int64_t>(r) * c, c);
  return out;
}

}  // namespace

std::uint64_t mgd_queries_per_step(int batch_rows, int probe_count) {
  return static_cast<std::uint64_t>(batch_rows) *
         (2ull + 2ull * static_cast<std::uint64_t>(probe_count));
}

MgdHook make_mgd_hook(BlackBoxOracle& oracle, const Tensor& batch_a,
                      const MgdGuidanceConfig& cfg, Rng& rng) {
  if (cfg.weights.lambda_cf < 0.0 || cfg.weights.lambda_ba < 0.0)
    throw std::invalid_argument("make_mgd_hook: negative weight");
  const bool logits_mode = oracle.mode() == OracleMode::logits;
  const bool soft = cfg.soft_counts && logits_mode;
  const bool use_cf = logits_mode && cfg.weights.lambda_cf > 0.0;

  // Authorized-side statistics are fixed once per invocation (one query).
  return [&oracle, batch_a, cfg, &rng, logits_mode, soft,
          use_cf](const Tensor& disguised) -> MgdFeedback {
    std::vector<double> ent_a;
    ClassDistribution dist_a;
    if (logits_mode) {
      const Tensor za = oracle.query(batch_a);
      ent_a = row_entropies(za);
      dist_a = soft ? soft_class_distribution(za)
                    : class_distribution(argmax_rows(za), oracle.class_count());
    } else {
      dist_a = class_distribution(oracle.predict_labels(batch_a),
                                  oracle.class_count());
    }

    // The scalar the estimator probes. Confidence pairing is positional, so
    // the disguised batch must match the authorized batch size when the
    // confidence term is active.
    auto parts = [&](const Tensor& x, double* cf_out,
                     double* ba_out) -> double {
      const Tensor clamped = clamp_unit(x);
      double cf = 0.0, ba = 0.0;
      if (logits_mode) {
        const Tensor zd = oracle.query(clamped);
        if (use_cf) {
          const std::vector<double> ent_d = row_entropies(zd);
          if (ent_d.size() != ent_a.size())
            throw std::invalid_argument(
                "guidance: authorized and disguised batch sizes differ");
          double s = 0.0;
          for (std::size_t i = 0; i < ent_a.size(); ++i)
            s += std::abs(ent_a[i] - ent_d[i]);
          cf = s / static_cast<double>(ent_a.size());
        }
        const ClassDistribution dist_d =
            soft ? soft_class_distribution(zd)
                 : class_distribution(argmax_rows(zd), oracle.class_count());
        ba = class_balance_loss(dist_d, dist_a);
      } else {
        const ClassDistribution dist_d = class_distribution(
            oracle.predict_labels(clamped), oracle.class_count());
        ba = class_balance_loss(dist_d, dist_a);
      }
      if (cf_out) *cf_out = cf;
      if (ba_out) *ba_out = ba;
      return cfg.weights.lambda_cf * cf + cfg.weights.lambda_ba * ba;
    };

    MgdFeedback fb;
    parts(disguised, &fb.cf, &fb.ba);  // base values for reporting
    auto scalar = [&parts](const Tensor& x) {
      return parts(x, nullptr, nullptr);
    };
    fb.grad_disguised = zo_gradient(scalar, disguised, cfg.zo, rng);
    return fb;
  };
}

}  // namespace ntljb
