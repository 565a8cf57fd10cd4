#pragma once

#include <string>
#include <vector>

#include "ntljb/domains.hpp"
#include "ntljb/oracle.hpp"
#include "ntljb/tensor.hpp"

// Black-box evidence of the attack surface: how confident the victim is and
// how evenly its predictions spread over the classes, per domain. Collected
// through sealed-oracle queries only, exported as CSVs plus rendered
// histograms.

namespace ntljb {

struct DomainStats {
  std::string tag;  // authorized | unauthorized | disguised
  int class_count = 0;
  std::vector<double> entropies;    // per sample, in [0, log C]
  std::vector<double> max_logits;   // per sample
  std::vector<int> predicted;       // per sample argmax
  std::vector<double> proportions;  // per class, sums to 1

  int sample_count() const { return static_cast<int>(entropies.size()); }
  double mean_entropy() const;
  double balance_entropy() const;
};

// Queries the oracle batch-wise and derives all statistics from the
// returned logits; costs exactly one query per image. Needs a logits-mode
// oracle (a labels-only oracle rejects the query itself).
DomainStats collect_stats(BlackBoxOracle& oracle, const Tensor& images,
                          const std::string& tag);
DomainStats collect_stats(BlackBoxOracle& oracle, const SampleSet& samples,
                          const std::string& tag);

// Density histogram of entropies: uniform bins over [0, log C], normalized
// so the densities integrate to 1 across the range.
std::vector<double> entropy_density(const std::vector<double>& entropies,
                                    int class_count, int bins = 50);

// Writes, per stats object, <tag>.csv (columns sample_index, entropy,
// max_logit, predicted_class), <tag>_entropy.png, and <tag>_balance.png,
// plus two overlays across all tags: comparison_entropy.png and
// comparison_balance.png. Rerunning on equal inputs reproduces every file
// byte for byte. log_density switches the density axis to a log scale.
void export_stats(const std::vector<DomainStats>& stats,
                  const std::string& out_dir, bool log_density = false);

}  // namespace ntljb
