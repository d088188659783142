#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lsor/tensor.hpp"

namespace lsor {

enum class Group { NC = 0, sMCI = 1, pMCI = 2, AD = 3 };

const char* group_name(Group g);
Group parse_group(const std::string& name);

struct Visit {
  double time = 0.0;             // age in years at the visit
  double cognitive_score = 0.0;  // 0..70, higher is worse
  double age_factor = 0.0;       // latent brain-age factor; NaN for imported cohorts
  std::vector<double> observation;
};

struct Subject {
  std::uint64_t id = 0;
  Group group = Group::NC;
  double baseline_age = 0.0;
  double progression_rate = 0.0;  // NaN for imported cohorts
  std::vector<Visit> visits;      // >= 2, strictly increasing times
};

struct Cohort {
  std::size_t input_dim = 0;
  bool has_truth = false;  // progression rates / age factors known (generated in-process)
  std::vector<Subject> subjects;

  std::size_t total_visits() const;
};

struct GenConfig {
  std::size_t n_subjects = 200;
  std::size_t visits_min = 2;
  std::size_t visits_max = 4;
  std::size_t input_dim = 32;
  // NC, sMCI, pMCI, AD; must sum to 1
  std::array<double, 4> group_mix{0.3, 0.3, 0.2, 0.2};
  double baseline_age_mean = 75.0;
  double baseline_age_std = 2.0;
  double obs_amplitude = 0.1;     // overall observation signal scale
  double noise_sigma = 0.01;      // additive observation noise
  double cog_noise_sigma = 2.0;   // additive cognitive-score noise
  std::uint64_t seed = 7;
};

// Deterministic synthetic longitudinal cohort. The observation of a visit is
// a fixed smooth function (sum of seeded, scaled sigmoids) of the latent age
// factor baseline_age + rate * elapsed, plus Gaussian noise. Group
// progression rates are ordered NC < sMCI < pMCI < AD in expectation.
Cohort generate_cohort(const GenConfig& config);

// One row per visit: subject_id, group, time, cognitive_score, obs_0..obs_{m-1}.
// Header row required. Doubles are written round-trip exact.
void write_cohort_csv(const Cohort& cohort, const std::string& path);
Cohort read_cohort_csv(const std::string& path);

// Visit-index pair within one subject, u strictly earlier than v.
struct VisitPair {
  std::size_t subject = 0;
  std::size_t u = 0;
  std::size_t v = 0;
};

// All ordered within-subject pairs (every gap, not only consecutive visits).
std::vector<VisitPair> all_pairs(const Cohort& cohort);

struct PairBatch {
  Tensor x_u, x_v;  // n x input_dim
  std::vector<double> delta_t;
  std::vector<std::uint64_t> subject_ids;
  std::vector<Group> group;
  std::vector<double> age_u;     // chronological age at u
  std::vector<double> cog_u;     // cognitive score at u
  std::vector<double> factor_u;  // latent age factor at u (NaN if unknown)

  std::size_t size() const { return delta_t.size(); }
};

PairBatch make_batch(const Cohort& cohort, const std::vector<VisitPair>& pairs);

// Epoch-wise batching: each epoch visits every pair exactly once in a fresh
// seeded shuffle; the final batch of an epoch may be short.
class PairSampler {
 public:
  PairSampler(const Cohort& cohort, std::size_t batch_size, std::uint64_t seed);

  std::size_t pair_count() const { return pairs_.size(); }
  std::size_t batches_per_epoch() const;
  PairBatch next();

 private:
  void reshuffle();

  const Cohort* cohort_;
  std::size_t batch_size_;
  std::vector<VisitPair> pairs_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  std::uint64_t rng_state_;
};

}  // namespace lsor
