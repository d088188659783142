#include "lsor/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>

namespace lsor {

const char* group_name(Group g) {
  switch (g) {
    case Group::NC: return "NC";
    case Group::sMCI: return "sMCI";
    case Group::pMCI: return "pMCI";
    case Group::AD: return "AD";
  }
  throw std::logic_error("unknown group");
}

Group parse_group(const std::string& name) {
  if (name == "NC") return Group::NC;
  if (name == "sMCI") return Group::sMCI;
  if (name == "pMCI") return Group::pMCI;
  if (name == "AD") return Group::AD;
  throw std::invalid_argument("unknown group label: " + name);
}

std::size_t Cohort::total_visits() const {
  std::size_t n = 0;
  for (const auto& s : subjects) n += s.visits.size();
  return n;
}

namespace {

// Smooth observation map: each output dimension is a random mixture of
// scaled sigmoids of the standardized age factor.
struct ObservationMap {
  std::size_t input_dim;
  std::size_t n_units;
  std::vector<double> coeff;   // input_dim x n_units
  std::vector<double> center;  // n_units
  std::vector<double> slope;   // n_units

  std::vector<double> operator()(double factor) const {
    const double a = (factor - 75.0) / 7.0;
    std::vector<double> units(n_units);
    for (std::size_t m = 0; m < n_units; ++m) {
      units[m] = std::tanh(slope[m] * (a - center[m]));
    }
    std::vector<double> out(input_dim, 0.0);
    for (std::size_t dim = 0; dim < input_dim; ++dim) {
      for (std::size_t m = 0; m < n_units; ++m) out[dim] += coeff[dim * n_units + m] * units[m];
    }
    return out;
  }
};

ObservationMap make_observation_map(std::size_t input_dim, double amplitude,
                                    std::mt19937_64& rng) {
  ObservationMap map;
  map.input_dim = input_dim;
  map.n_units = 6;
  std::normal_distribution<double> coeff_dist(0.0,
                                              amplitude / std::sqrt(static_cast<double>(map.n_units)));
  std::uniform_real_distribution<double> center_dist(-1.6, 1.6);
  std::uniform_real_distribution<double> slope_dist(0.8, 2.0);
  map.coeff.resize(input_dim * map.n_units);
  for (double& c : map.coeff) c = coeff_dist(rng);
  map.center.resize(map.n_units);
  for (double& c : map.center) c = center_dist(rng);
  map.slope.resize(map.n_units);
  for (double& s : map.slope) s = slope_dist(rng);
  return map;
}

double cognitive_curve(double factor) {
  // monotone in the age factor, spanning a useful part of the 0..70 scale
  return 70.0 / (1.0 + std::exp(-(factor - 78.0) / 5.0));
}

constexpr std::array<double, 4> kGroupRates{0.4, 0.9, 1.6, 2.2};

}  // namespace

Cohort generate_cohort(const GenConfig& config) {
  if (config.n_subjects < 1) throw std::invalid_argument("gen: need at least one subject");
  if (config.visits_min < 2 || config.visits_max < config.visits_min) {
    throw std::invalid_argument("gen: visits range must satisfy 2 <= min <= max");
  }
  double mix_total = 0.0;
  for (double p : config.group_mix) {
    if (p < 0.0) throw std::invalid_argument("gen: group mix entries must be nonnegative");
    mix_total += p;
  }
  if (std::abs(mix_total - 1.0) > 1e-9) {
    throw std::invalid_argument("gen: group mix must sum to 1");
  }

  if (config.obs_amplitude <= 0.0) {
    throw std::invalid_argument("gen: observation amplitude must be positive");
  }
  std::mt19937_64 rng(config.seed);
  ObservationMap obs_map = make_observation_map(config.input_dim, config.obs_amplitude, rng);

  // Deterministic group counts (largest remainder), then a seeded shuffle.
  std::array<std::size_t, 4> counts{};
  std::size_t assigned = 0;
  std::array<double, 4> remainder{};
  for (std::size_t g = 0; g < 4; ++g) {
    const double exact = config.group_mix[g] * static_cast<double>(config.n_subjects);
    counts[g] = static_cast<std::size_t>(exact);
    remainder[g] = exact - static_cast<double>(counts[g]);
    assigned += counts[g];
  }
  while (assigned < config.n_subjects) {
    std::size_t best = 0;
    for (std::size_t g = 1; g < 4; ++g) {
      if (remainder[g] > remainder[best]) best = g;
    }
    counts[best]++;
    remainder[best] = -1.0;
    assigned++;
  }
  std::vector<Group> labels;
  labels.reserve(config.n_subjects);
  for (std::size_t g = 0; g < 4; ++g) {
    labels.insert(labels.end(), counts[g], static_cast<Group>(g));
  }
  std::shuffle(labels.begin(), labels.end(), rng);

  std::normal_distribution<double> base_age(config.baseline_age_mean, config.baseline_age_std);
  std::normal_distribution<double> rate_jitter(0.0, 0.1);
  std::normal_distribution<double> obs_noise(0.0, config.noise_sigma);
  std::normal_distribution<double> cog_noise(0.0, config.cog_noise_sigma);
  std::uniform_real_distribution<double> gap(1.0, 2.0);
  std::uniform_int_distribution<std::size_t> visit_count(config.visits_min, config.visits_max);

  Cohort cohort;
  cohort.input_dim = config.input_dim;
  cohort.has_truth = true;
  cohort.subjects.reserve(config.n_subjects);
  for (std::size_t i = 0; i < config.n_subjects; ++i) {
    Subject subject;
    subject.id = i;
    subject.group = labels[i];
    subject.baseline_age = std::clamp(base_age(rng), 60.0, 90.0);
    subject.progression_rate =
        std::max(0.05, kGroupRates[static_cast<std::size_t>(subject.group)] + rate_jitter(rng));
    const std::size_t n_visits = visit_count(rng);
    double elapsed = 0.0;
    for (std::size_t k = 0; k < n_visits; ++k) {
      if (k > 0) elapsed += gap(rng);
      Visit visit;
      visit.time = subject.baseline_age + elapsed;
      visit.age_factor = subject.baseline_age + subject.progression_rate * elapsed;
      visit.cognitive_score =
          std::clamp(cognitive_curve(visit.age_factor) + cog_noise(rng), 0.0, 70.0);
      visit.observation = obs_map(visit.age_factor);
      for (double& v : visit.observation) v += obs_noise(rng);
      subject.visits.push_back(std::move(visit));
    }
    cohort.subjects.push_back(std::move(subject));
  }
  return cohort;
}

namespace {

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void write_cohort_csv(const Cohort& cohort, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open cohort file for writing: " + path);
  out << "subject_id,group,time,cognitive_score";
  for (std::size_t d = 0; d < cohort.input_dim; ++d) out << ",obs_" << d;
  out << "\n";
  for (const auto& subject : cohort.subjects) {
    for (const auto& visit : subject.visits) {
      out << subject.id << "," << group_name(subject.group) << "," << format_double(visit.time)
          << "," << format_double(visit.cognitive_score);
      for (double v : visit.observation) out << "," << format_double(v);
      out << "\n";
    }
  }
  if (!out) throw std::runtime_error("failed writing cohort file: " + path);
}

Cohort read_cohort_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open cohort file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("cohort file is empty: " + path);
  std::size_t n_cols = 1;
  for (char c : line) n_cols += c == ',';
  if (n_cols < 5 || line.rfind("subject_id,group,time,cognitive_score", 0) != 0) {
    throw std::runtime_error("cohort file has an unexpected header: " + path);
  }
  const std::size_t input_dim = n_cols - 4;

  Cohort cohort;
  cohort.input_dim = input_dim;
  cohort.has_truth = false;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() != n_cols) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": expected " +
                               std::to_string(n_cols) + " fields, got " +
                               std::to_string(fields.size()));
    }
    const auto id = static_cast<std::uint64_t>(std::stoull(fields[0]));
    Visit visit;
    visit.time = std::stod(fields[2]);
    visit.cognitive_score = std::stod(fields[3]);
    visit.age_factor = nan;
    visit.observation.resize(input_dim);
    for (std::size_t d = 0; d < input_dim; ++d) visit.observation[d] = std::stod(fields[4 + d]);

    if (cohort.subjects.empty() || cohort.subjects.back().id != id) {
      Subject subject;
      subject.id = id;
      subject.group = parse_group(fields[1]);
      subject.progression_rate = nan;
      cohort.subjects.push_back(std::move(subject));
    }
    cohort.subjects.back().visits.push_back(std::move(visit));
  }
  for (auto& subject : cohort.subjects) {
    if (subject.visits.size() < 2) {
      throw std::runtime_error("cohort subject " + std::to_string(subject.id) +
                               " has fewer than two visits");
    }
    for (std::size_t k = 1; k < subject.visits.size(); ++k) {
      if (subject.visits[k].time <= subject.visits[k - 1].time) {
        throw std::runtime_error("cohort subject " + std::to_string(subject.id) +
                                 " has non-increasing visit times");
      }
    }
    subject.baseline_age = subject.visits.front().time;
  }
  return cohort;
}

std::vector<VisitPair> all_pairs(const Cohort& cohort) {
  std::vector<VisitPair> pairs;
  for (std::size_t s = 0; s < cohort.subjects.size(); ++s) {
    const std::size_t n = cohort.subjects[s].visits.size();
    for (std::size_t u = 0; u < n; ++u) {
      for (std::size_t v = u + 1; v < n; ++v) pairs.push_back({s, u, v});
    }
  }
  return pairs;
}

PairBatch make_batch(const Cohort& cohort, const std::vector<VisitPair>& pairs) {
  const std::size_t n = pairs.size();
  const std::size_t m = cohort.input_dim;
  std::vector<double> xu(n * m), xv(n * m);
  PairBatch batch;
  batch.delta_t.resize(n);
  batch.subject_ids.resize(n);
  batch.group.resize(n);
  batch.age_u.resize(n);
  batch.cog_u.resize(n);
  batch.factor_u.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Subject& subject = cohort.subjects[pairs[i].subject];
    const Visit& u = subject.visits[pairs[i].u];
    const Visit& v = subject.visits[pairs[i].v];
    std::copy(u.observation.begin(), u.observation.end(), xu.begin() + i * m);
    std::copy(v.observation.begin(), v.observation.end(), xv.begin() + i * m);
    batch.delta_t[i] = v.time - u.time;
    batch.subject_ids[i] = subject.id;
    batch.group[i] = subject.group;
    batch.age_u[i] = u.time;
    batch.cog_u[i] = u.cognitive_score;
    batch.factor_u[i] = u.age_factor;
  }
  batch.x_u = Tensor({n, m}, std::move(xu), false);
  batch.x_v = Tensor({n, m}, std::move(xv), false);
  return batch;
}

PairSampler::PairSampler(const Cohort& cohort, std::size_t batch_size, std::uint64_t seed)
    : cohort_(&cohort), batch_size_(batch_size), rng_state_(seed) {
  if (batch_size_ < 1) throw std::invalid_argument("sampler: batch size must be positive");
  pairs_ = all_pairs(cohort);
  if (pairs_.empty()) throw std::invalid_argument("sampler: cohort has no longitudinal pairs");
  order_.resize(pairs_.size());
  for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
  reshuffle();
}

std::size_t PairSampler::batches_per_epoch() const {
  return (pairs_.size() + batch_size_ - 1) / batch_size_;
}

void PairSampler::reshuffle() {
  std::mt19937_64 rng(rng_state_);
  std::shuffle(order_.begin(), order_.end(), rng);
  rng_state_ = rng();
  cursor_ = 0;
}

PairBatch PairSampler::next() {
  if (cursor_ >= order_.size()) reshuffle();
  const std::size_t take = std::min(batch_size_, order_.size() - cursor_);
  std::vector<VisitPair> selected;
  selected.reserve(take);
  for (std::size_t i = 0; i < take; ++i) selected.push_back(pairs_[order_[cursor_ + i]]);
  cursor_ += take;
  return make_batch(*cohort_, selected);
}

}  // namespace lsor
