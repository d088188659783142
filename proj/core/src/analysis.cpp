#include "lsor/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

#include "lsor/adam.hpp"
#include "lsor/autodiff.hpp"

namespace lsor {

SimilarityGrid similarity_grid(std::span<const double> z, const SomGrid& grid) {
  if (z.size() != grid.dim()) throw std::invalid_argument("similarity_grid: latent dim mismatch");
  const std::size_t k = grid.cells(), d = grid.dim();
  auto reps = grid.representations().values();
  std::vector<double> dist(k);
  double mean = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double diff = z[j] - reps[c * d + j];
      s += diff * diff;
    }
    dist[c] = s;
    mean += s;
  }
  mean /= static_cast<double>(k);
  double var = 0.0;
  for (double v : dist) var += (v - mean) * (v - mean);
  const double gamma = std::sqrt(var / static_cast<double>(k));  // population std

  SimilarityGrid out;
  out.rows = grid.rows();
  out.cols = grid.cols();
  out.gamma = gamma;
  out.rho.assign(k, 1.0 / static_cast<double>(k));
  if (gamma < 1e-12) return out;  // all distances equal: uniform

  double mx = -std::numeric_limits<double>::infinity();
  for (double v : dist) mx = std::max(mx, -v / gamma);
  double total = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    out.rho[c] = std::exp(-dist[c] / gamma - mx);
    total += out.rho[c];
  }
  for (double& v : out.rho) v /= total;
  return out;
}

SimilarityGrid group_average(const std::vector<SimilarityGrid>& members,
                             const std::vector<std::size_t>& indices) {
  if (indices.empty()) throw std::invalid_argument("group_average: empty group");
  SimilarityGrid out;
  out.rows = members[indices[0]].rows;
  out.cols = members[indices[0]].cols;
  out.rho.assign(out.rows * out.cols, 0.0);
  double gamma = 0.0;
  for (std::size_t idx : indices) {
    const auto& g = members[idx];
    if (g.rows != out.rows || g.cols != out.cols) {
      throw std::invalid_argument("group_average: mixed grid shapes");
    }
    for (std::size_t c = 0; c < out.rho.size(); ++c) out.rho[c] += g.rho[c];
    gamma += g.gamma;
  }
  const double inv = 1.0 / static_cast<double>(indices.size());
  for (double& v : out.rho) v *= inv;
  out.gamma = gamma * inv;
  return out;
}

double expected_column(const SimilarityGrid& grid) {
  double e = 0.0;
  for (std::size_t r = 0; r < grid.rows; ++r) {
    for (std::size_t c = 0; c < grid.cols; ++c) e += grid.at(r, c) * static_cast<double>(c);
  }
  return e;
}

double distance_correlation(std::span<const double> x, std::size_t n, std::size_t p,
                            std::span<const double> y, std::size_t q) {
  if (n < 2) throw std::invalid_argument("dcor: need at least two samples");
  if (x.size() != n * p || y.size() != n * q) {
    throw std::invalid_argument("dcor: sample count mismatch");
  }
  auto centered_dist = [n](std::span<const double> m, std::size_t dim) {
    std::vector<double> a(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        double s = 0.0;
        for (std::size_t c = 0; c < dim; ++c) {
          const double diff = m[i * dim + c] - m[j * dim + c];
          s += diff * diff;
        }
        const double dist = std::sqrt(s);
        a[i * n + j] = dist;
        a[j * n + i] = dist;
      }
    }
    std::vector<double> row_mean(n, 0.0);
    double grand = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) row_mean[i] += a[i * n + j];
      row_mean[i] /= static_cast<double>(n);
      grand += row_mean[i];
    }
    grand /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        a[i * n + j] += grand - row_mean[i] - row_mean[j];
      }
    }
    return a;
  };
  const auto a = centered_dist(x, p);
  const auto b = centered_dist(y, q);
  double cov = 0.0, var_a = 0.0, var_b = 0.0;
  for (std::size_t i = 0; i < n * n; ++i) {
    cov += a[i] * b[i];
    var_a += a[i] * a[i];
    var_b += b[i] * b[i];
  }
  const double inv_n2 = 1.0 / (static_cast<double>(n) * static_cast<double>(n));
  cov *= inv_n2;
  var_a *= inv_n2;
  var_b *= inv_n2;
  if (var_a < 1e-12 || var_b < 1e-12) return 0.0;
  const double r2 = std::max(cov, 0.0) / std::sqrt(var_a * var_b);
  return std::sqrt(r2);
}

void symmetric_eigen(std::vector<double>& a, std::size_t n, std::vector<double>& eigenvalues,
                     std::vector<double>& eigenvectors) {
  if (a.size() != n * n) throw std::invalid_argument("eigen: matrix size mismatch");
  eigenvectors.assign(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) eigenvectors[i * n + i] = 1.0;

  auto off_norm = [&]() {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) s += a[i * n + j] * a[i * n + j];
    return std::sqrt(2.0 * s);
  };
  double frob = 0.0;
  for (double v : a) frob += v * v;
  const double tol = 1e-14 * std::max(std::sqrt(frob), 1e-300);

  for (int sweep = 0; sweep < 100 && off_norm() > tol; ++sweep) {
    for (std::size_t pp = 0; pp + 1 < n; ++pp) {
      for (std::size_t qq = pp + 1; qq < n; ++qq) {
        const double apq = a[pp * n + qq];
        if (std::abs(apq) <= tol * 1e-2) continue;
        const double app = a[pp * n + pp];
        const double aqq = a[qq * n + qq];
        const double theta = (aqq - app) / (2.0 * apq);
        const double sign = theta >= 0.0 ? 1.0 : -1.0;
        const double t = sign / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a[k * n + pp];
          const double akq = a[k * n + qq];
          a[k * n + pp] = c * akp - s * akq;
          a[k * n + qq] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a[pp * n + k];
          const double aqk = a[qq * n + k];
          a[pp * n + k] = c * apk - s * aqk;
          a[qq * n + k] = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = eigenvectors[k * n + pp];
          const double vkq = eigenvectors[k * n + qq];
          eigenvectors[k * n + pp] = c * vkp - s * vkq;
          eigenvectors[k * n + qq] = s * vkp + c * vkq;
        }
      }
    }
  }
  eigenvalues.resize(n);
  for (std::size_t i = 0; i < n; ++i) eigenvalues[i] = a[i * n + i];
  // sort ascending, permuting eigenvector columns along
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return eigenvalues[i] < eigenvalues[j]; });
  std::vector<double> ev_sorted(n);
  std::vector<double> vec_sorted(n * n);
  for (std::size_t c = 0; c < n; ++c) {
    ev_sorted[c] = eigenvalues[order[c]];
    for (std::size_t r = 0; r < n; ++r) vec_sorted[r * n + c] = eigenvectors[r * n + order[c]];
  }
  eigenvalues = std::move(ev_sorted);
  eigenvectors = std::move(vec_sorted);
}

std::array<double, 2> PcaBasis::project_point(std::span<const double> v) const {
  std::array<double, 2> out{0.0, 0.0};
  for (std::size_t axis = 0; axis < 2; ++axis) {
    for (std::size_t j = 0; j < dim; ++j) out[axis] += (v[j] - mean[j]) * axes[axis][j];
  }
  return out;
}

std::array<double, 2> PcaBasis::project_direction(std::span<const double> v) const {
  std::array<double, 2> out{0.0, 0.0};
  for (std::size_t axis = 0; axis < 2; ++axis) {
    for (std::size_t j = 0; j < dim; ++j) out[axis] += v[j] * axes[axis][j];
  }
  return out;
}

PcaBasis pca_from_grid(const SomGrid& grid) {
  const std::size_t k = grid.cells(), d = grid.dim();
  if (k < 2) throw std::invalid_argument("pca: need at least two representations");
  auto reps = grid.representations().values();

  PcaBasis basis;
  basis.dim = d;
  basis.mean.assign(d, 0.0);
  for (std::size_t c = 0; c < k; ++c)
    for (std::size_t j = 0; j < d; ++j) basis.mean[j] += reps[c * d + j];
  for (double& v : basis.mean) v /= static_cast<double>(k);

  std::vector<double> cov(d * d, 0.0);
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t i = 0; i < d; ++i) {
      const double ci = reps[c * d + i] - basis.mean[i];
      for (std::size_t j = i; j < d; ++j) {
        cov[i * d + j] += ci * (reps[c * d + j] - basis.mean[j]);
      }
    }
  }
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = i; j < d; ++j) {
      cov[i * d + j] /= static_cast<double>(k);
      cov[j * d + i] = cov[i * d + j];
    }
  }

  std::vector<double> eigenvalues, eigenvectors;
  symmetric_eigen(cov, d, eigenvalues, eigenvectors);
  const double top = eigenvalues.back();
  const double tol = 1e-12 * std::max(top, 1e-300);
  if (d < 2 || eigenvalues[d - 2] <= tol) {
    throw std::invalid_argument("pca: representations are rank-deficient (<2 nonzero eigenvalues)");
  }
  for (std::size_t axis = 0; axis < 2; ++axis) {
    const std::size_t col = d - 1 - axis;
    basis.eigenvalues[axis] = eigenvalues[col];
    basis.axes[axis].resize(d);
    for (std::size_t j = 0; j < d; ++j) basis.axes[axis][j] = eigenvectors[j * d + col];
    for (std::size_t j = 0; j < d; ++j) {
      if (std::abs(basis.axes[axis][j]) > 1e-12) {
        if (basis.axes[axis][j] < 0.0) {
          for (double& v : basis.axes[axis]) v = -v;
        }
        break;
      }
    }
  }
  return basis;
}

// --- metrics ----------------------------------------------------------------

std::pair<double, double> classification_metrics(std::span<const double> scores,
                                                 std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size() || scores.empty()) {
    throw std::invalid_argument("classification_metrics: size mismatch");
  }
  std::size_t n_pos = 0, n_neg = 0;
  for (auto l : labels) (l ? n_pos : n_neg)++;
  if (n_pos == 0 || n_neg == 0) {
    throw std::invalid_argument("classification_metrics: one class absent");
  }
  std::size_t tp = 0, tn = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool pred = scores[i] > 0.5;
    if (labels[i] && pred) tp++;
    if (!labels[i] && !pred) tn++;
  }
  const double bacc = 0.5 * (static_cast<double>(tp) / static_cast<double>(n_pos) +
                             static_cast<double>(tn) / static_cast<double>(n_neg));

  // Mann-Whitney AUC via average ranks; ties get the midrank.
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return scores[i] < scores[j]; });
  std::vector<double> rank(n, 0.0);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double mid = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
    for (std::size_t kk = i; kk <= j; ++kk) rank[order[kk]] = mid;
    i = j + 1;
  }
  double rank_sum_pos = 0.0;
  for (std::size_t idx = 0; idx < n; ++idx) {
    if (labels[idx]) rank_sum_pos += rank[idx];
  }
  const double u = rank_sum_pos - static_cast<double>(n_pos) * (static_cast<double>(n_pos) + 1.0) / 2.0;
  const double auc = u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
  return {bacc, auc};
}

std::pair<double, double> regression_metrics(std::span<const double> preds,
                                             std::span<const double> targets) {
  if (preds.size() != targets.size() || preds.size() < 2) {
    throw std::invalid_argument("regression_metrics: need at least two aligned samples");
  }
  const double n = static_cast<double>(preds.size());
  double mean = 0.0;
  for (double t : targets) mean += t;
  mean /= n;
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    ss_res += (preds[i] - targets[i]) * (preds[i] - targets[i]);
    ss_tot += (targets[i] - mean) * (targets[i] - mean);
  }
  if (ss_tot <= 0.0) {
    throw std::invalid_argument("regression_metrics: zero-variance targets, r2 undefined");
  }
  return {1.0 - ss_res / ss_tot, std::sqrt(ss_res / n)};
}

// --- probes -----------------------------------------------------------------

namespace {

struct Standardizer {
  std::vector<double> mean, std;

  static Standardizer fit(std::span<const double> x, std::size_t n, std::size_t d) {
    Standardizer s;
    s.mean.assign(d, 0.0);
    s.std.assign(d, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) s.mean[j] += x[i * d + j];
    for (double& m : s.mean) m /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) {
        const double c = x[i * d + j] - s.mean[j];
        s.std[j] += c * c;
      }
    for (double& v : s.std) v = std::max(std::sqrt(v / static_cast<double>(n)), 1e-8);
    return s;
  }

  std::vector<double> apply(std::span<const double> x, std::size_t n, std::size_t d) const {
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) out[i * d + j] = (x[i * d + j] - mean[j]) / std[j];
    return out;
  }
};

Tensor probe_loss(Tape& tape, const Mlp& probe, const Tensor& x, const Tensor& y,
                  ProbeTask task) {
  Tensor logits = probe.forward(tape, x);
  const double inv_n = 1.0 / static_cast<double>(x.dim(0));
  if (task == ProbeTask::Regression) {
    return tape.scale(tape.squared_norm(tape.sub(logits, y)), inv_n);
  }
  // binary cross-entropy with logits: mean(softplus(s) - s * y)
  Tensor sp = tape.softplus(logits);
  return tape.scale(tape.sum(tape.sub(sp, tape.mul(logits, y))), inv_n);
}

std::vector<double> probe_scores(const Mlp& probe, std::span<const double> x, std::size_t n,
                                 std::size_t d, ProbeTask task) {
  Tape tape;
  Tensor logits =
      probe.forward(tape, Tensor({n, d}, std::vector<double>(x.begin(), x.end()), false));
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double s = logits.at(i);
    out[i] = task == ProbeTask::Classification ? 1.0 / (1.0 + std::exp(-s)) : s;
  }
  return out;
}

}  // namespace

ProbeMetrics train_probe(const ProbeSplit& split, ProbeTask task, std::uint64_t seed) {
  const std::size_t d = split.dim;
  const std::size_t n_train = split.y_train.size();
  const std::size_t n_val = split.y_val.size();
  const std::size_t n_test = split.y_test.size();
  if (n_train == 0 || n_test == 0) throw std::invalid_argument("probe: empty split");

  if (task == ProbeTask::Classification) {
    bool has0 = false, has1 = false;
    for (double y : split.y_train) (y > 0.5 ? has1 : has0) = true;
    if (!has0 || !has1) {
      throw std::invalid_argument("probe: training split contains a single class");
    }
  }

  const Standardizer stz = Standardizer::fit(split.x_train, n_train, d);
  const auto x_train = stz.apply(split.x_train, n_train, d);
  const auto x_val = stz.apply(split.x_val, n_val, d);
  const auto x_test = stz.apply(split.x_test, n_test, d);

  // Regression targets are standardized for conditioning; predictions are
  // mapped back before computing metrics.
  double y_mean = 0.0, y_std = 1.0;
  std::vector<double> y_train = split.y_train;
  std::vector<double> y_val = split.y_val;
  if (task == ProbeTask::Regression) {
    for (double y : split.y_train) y_mean += y;
    y_mean /= static_cast<double>(n_train);
    double var = 0.0;
    for (double y : split.y_train) var += (y - y_mean) * (y - y_mean);
    y_std = std::max(std::sqrt(var / static_cast<double>(n_train)), 1e-8);
    for (double& y : y_train) y = (y - y_mean) / y_std;
    for (double& y : y_val) y = (y - y_mean) / y_std;
  }

  Mlp probe({d, 64, 1}, 0.2, seed);
  AdamOptimizer opt(AdamConfig{2e-3, 0.9, 0.999, 1e-8, 0.0});
  opt.add_params(probe.named_params("probe"));

  Tensor xt({n_train, d}, x_train, false);
  Tensor yt({n_train, 1}, y_train, false);
  Tensor xv = n_val ? Tensor({n_val, d}, x_val, false) : Tensor();
  Tensor yv = n_val ? Tensor({n_val, 1}, y_val, false) : Tensor();

  const int max_epochs = 200;
  double best_val = std::numeric_limits<double>::infinity();
  std::vector<std::vector<double>> best_params;
  auto snapshot = [&]() {
    best_params.clear();
    for (auto& [name, p] : probe.named_params("probe")) {
      best_params.emplace_back(p.values().begin(), p.values().end());
    }
  };
  snapshot();
  for (int epoch = 0; epoch < max_epochs; ++epoch) {
    Tape tape;
    Tensor loss = probe_loss(tape, probe, xt, yt, task);
    tape.backward(loss);
    opt.step();
    if (n_val) {
      Tape eval_tape;
      const double val = probe_loss(eval_tape, probe, xv, yv, task).value();
      if (val < best_val) {
        best_val = val;
        snapshot();
      }
    }
  }
  if (n_val) {
    std::size_t slot = 0;
    for (auto& [name, p] : probe.named_params("probe")) {
      auto dst = p.values_mut();
      std::copy(best_params[slot].begin(), best_params[slot].end(), dst.begin());
      ++slot;
    }
  }

  auto scores = probe_scores(probe, x_test, n_test, d, task);
  ProbeMetrics metrics;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  if (task == ProbeTask::Classification) {
    std::vector<std::uint8_t> labels(n_test);
    for (std::size_t i = 0; i < n_test; ++i) labels[i] = split.y_test[i] > 0.5 ? 1 : 0;
    auto [bacc, auc] = classification_metrics(scores, labels);
    metrics.bacc = bacc;
    metrics.auc = auc;
    metrics.r2 = nan;
    metrics.rmse = nan;
  } else {
    for (double& s : scores) s = s * y_std + y_mean;
    auto [r2, rmse] = regression_metrics(scores, split.y_test);
    metrics.r2 = r2;
    metrics.rmse = rmse;
    metrics.bacc = nan;
    metrics.auc = nan;
  }
  return metrics;
}

ProbeCvResult probe_cross_validate(std::span<const double> latents, std::size_t dim,
                                   std::span<const double> targets,
                                   std::span<const std::uint64_t> subject_ids, ProbeTask task,
                                   std::size_t n_folds, std::uint64_t seed) {
  const std::size_t n = targets.size();
  if (latents.size() != n * dim || subject_ids.size() != n) {
    throw std::invalid_argument("probe_cv: size mismatch");
  }
  if (n_folds < 2) throw std::invalid_argument("probe_cv: need at least two folds");

  // Subject-level folds. For classification the subjects are dealt
  // round-robin within each class so no fold loses a class outright.
  std::vector<std::uint64_t> subjects;
  std::vector<double> subject_label;
  for (std::size_t i = 0; i < n; ++i) {
    if (std::find(subjects.begin(), subjects.end(), subject_ids[i]) == subjects.end()) {
      subjects.push_back(subject_ids[i]);
      subject_label.push_back(targets[i]);
    }
  }
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> order(subjects.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::size_t> fold_of_subject(subjects.size());
  if (task == ProbeTask::Classification) {
    std::size_t next_pos = 0, next_neg = 0;
    for (std::size_t idx : order) {
      auto& counter = subject_label[idx] > 0.5 ? next_pos : next_neg;
      fold_of_subject[idx] = counter % n_folds;
      ++counter;
    }
  } else {
    for (std::size_t rank = 0; rank < order.size(); ++rank) {
      fold_of_subject[order[rank]] = rank % n_folds;
    }
  }
  auto subject_fold = [&](std::uint64_t id) {
    const auto it = std::find(subjects.begin(), subjects.end(), id);
    return fold_of_subject[static_cast<std::size_t>(it - subjects.begin())];
  };

  ProbeCvResult result;
  for (std::size_t fold = 0; fold < n_folds; ++fold) {
    // 10% of the training subjects (at least one) become the validation split,
    // taken from the tail of the shuffled order.
    std::vector<std::uint64_t> train_subjects;
    for (std::size_t idx : order) {
      if (fold_of_subject[idx] != fold) train_subjects.push_back(subjects[idx]);
    }
    const std::size_t n_val_subj = std::max<std::size_t>(1, train_subjects.size() / 10);
    std::vector<std::uint64_t> val_subjects(train_subjects.end() - static_cast<std::ptrdiff_t>(n_val_subj),
                                            train_subjects.end());
    train_subjects.resize(train_subjects.size() - n_val_subj);

    ProbeSplit split;
    split.dim = dim;
    for (std::size_t i = 0; i < n; ++i) {
      const std::uint64_t id = subject_ids[i];
      auto push = [&](std::vector<double>& xs, std::vector<double>& ys) {
        xs.insert(xs.end(), latents.begin() + static_cast<std::ptrdiff_t>(i * dim),
                  latents.begin() + static_cast<std::ptrdiff_t>((i + 1) * dim));
        ys.push_back(targets[i]);
      };
      if (subject_fold(id) == fold) {
        push(split.x_test, split.y_test);
      } else if (std::find(val_subjects.begin(), val_subjects.end(), id) != val_subjects.end()) {
        push(split.x_val, split.y_val);
      } else {
        push(split.x_train, split.y_train);
      }
    }
    result.folds.push_back(train_probe(split, task, seed + fold));
  }

  auto summarize = [&](auto field) {
    double mean = 0.0;
    for (const auto& m : result.folds) mean += m.*field;
    mean /= static_cast<double>(result.folds.size());
    double var = 0.0;
    for (const auto& m : result.folds) var += (m.*field - mean) * (m.*field - mean);
    const double sd = result.folds.size() > 1
                          ? std::sqrt(var / static_cast<double>(result.folds.size() - 1))
                          : 0.0;
    return std::pair<double, double>{mean, sd};
  };
  std::tie(result.mean.bacc, result.stddev.bacc) = summarize(&ProbeMetrics::bacc);
  std::tie(result.mean.auc, result.stddev.auc) = summarize(&ProbeMetrics::auc);
  std::tie(result.mean.r2, result.stddev.r2) = summarize(&ProbeMetrics::r2);
  std::tie(result.mean.rmse, result.stddev.rmse) = summarize(&ProbeMetrics::rmse);
  return result;
}

// --- cohort-level analysis ---------------------------------------------------

CohortAnalysis analyze_cohort(const Mlp& encoder, const SomGrid& grid, const Cohort& cohort) {
  const std::size_t m = cohort.input_dim;
  std::vector<double> x;
  x.reserve(cohort.total_visits() * m);
  for (const auto& subject : cohort.subjects) {
    for (const auto& visit : subject.visits) {
      x.insert(x.end(), visit.observation.begin(), visit.observation.end());
    }
  }
  const std::size_t n = x.size() / m;
  Tape tape;
  Tensor z = encoder.forward(tape, Tensor({n, m}, std::move(x), false));
  std::vector<double> latents(z.values().begin(), z.values().end());

  CohortAnalysis analysis;
  analysis.grid_rows = grid.rows();
  analysis.grid_cols = grid.cols();
  analysis.latents = Tensor({n, grid.dim()}, latents, false);

  std::size_t row_idx = 0;
  for (const auto& subject : cohort.subjects) {
    for (const auto& visit : subject.visits) {
      VisitRecord rec;
      rec.subject_id = subject.id;
      rec.group = subject.group;
      rec.time = visit.time;
      rec.age = visit.time;
      rec.cognitive_score = visit.cognitive_score;
      rec.age_factor = visit.age_factor;
      const auto zrow =
          std::span<const double>(latents).subspan(row_idx * grid.dim(), grid.dim());
      rec.eps = nearest(grid, zrow);
      rec.rho = similarity_grid(zrow, grid);
      analysis.visits.push_back(std::move(rec));
      ++row_idx;
    }
  }

  // Grid orientation is a gauge freedom of the objective; fix the display
  // orientation so the column coordinate increases with age.
  double mean_col = 0.0, mean_age = 0.0;
  for (const auto& v : analysis.visits) {
    mean_col += static_cast<double>(v.eps.col);
    mean_age += v.age;
  }
  mean_col /= static_cast<double>(analysis.visits.size());
  mean_age /= static_cast<double>(analysis.visits.size());
  double cov = 0.0;
  for (const auto& v : analysis.visits) {
    cov += (static_cast<double>(v.eps.col) - mean_col) * (v.age - mean_age);
  }
  if (cov < 0.0) {
    analysis.columns_flipped = true;
    const std::size_t cols = analysis.grid_cols;
    for (auto& v : analysis.visits) {
      v.eps.col = cols - 1 - v.eps.col;
      std::vector<double> flipped(v.rho.rho.size());
      for (std::size_t r = 0; r < v.rho.rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
          flipped[r * cols + (cols - 1 - c)] = v.rho.rho[r * cols + c];
        }
      }
      v.rho.rho = std::move(flipped);
    }
  }
  return analysis;
}

std::vector<DcorRow> dcor_table(const CohortAnalysis& analysis) {
  const std::size_t n = analysis.visits.size();
  std::vector<double> coords(n * 2);
  std::vector<double> age(n), cog(n), severe(n), factor(n);
  bool has_factor = true;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& v = analysis.visits[i];
    coords[i * 2] = static_cast<double>(v.eps.row);
    coords[i * 2 + 1] = static_cast<double>(v.eps.col);
    age[i] = v.age;
    cog[i] = v.cognitive_score;
    severe[i] = (v.group == Group::pMCI || v.group == Group::AD) ? 1.0 : 0.0;
    factor[i] = v.age_factor;
    has_factor = has_factor && std::isfinite(v.age_factor);
  }
  std::vector<DcorRow> rows;
  rows.push_back({"age", distance_correlation(coords, n, 2, age, 1), n});
  rows.push_back({"cognitive_score", distance_correlation(coords, n, 2, cog, 1), n});
  rows.push_back({"severe_decline", distance_correlation(coords, n, 2, severe, 1), n});
  if (has_factor) {
    rows.push_back({"age_factor", distance_correlation(coords, n, 2, factor, 1), n});
  }
  return rows;
}

std::vector<SimilarityGrid> age_bin_averages(const CohortAnalysis& analysis, std::size_t bins) {
  if (bins < 1 || analysis.visits.empty()) {
    throw std::invalid_argument("age_bin_averages: need visits and at least one bin");
  }
  std::vector<std::size_t> order(analysis.visits.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
    return analysis.visits[i].age < analysis.visits[j].age;
  });
  std::vector<SimilarityGrid> member_grids;
  member_grids.reserve(analysis.visits.size());
  for (const auto& v : analysis.visits) member_grids.push_back(v.rho);

  std::vector<SimilarityGrid> out;
  const std::size_t n = order.size();
  for (std::size_t b = 0; b < bins; ++b) {
    const std::size_t lo = b * n / bins;
    const std::size_t hi = (b + 1) * n / bins;
    if (lo >= hi) throw std::invalid_argument("age_bin_averages: empty bin (too many bins)");
    std::vector<std::size_t> members(order.begin() + static_cast<std::ptrdiff_t>(lo),
                                     order.begin() + static_cast<std::ptrdiff_t>(hi));
    out.push_back(group_average(member_grids, members));
  }
  return out;
}

SimilarityGrid group_average_grid(const CohortAnalysis& analysis, Group group) {
  std::vector<SimilarityGrid> member_grids;
  member_grids.reserve(analysis.visits.size());
  std::vector<std::size_t> members;
  for (std::size_t i = 0; i < analysis.visits.size(); ++i) {
    member_grids.push_back(analysis.visits[i].rho);
    if (analysis.visits[i].group == group) members.push_back(i);
  }
  if (members.empty()) {
    throw std::invalid_argument(std::string("group_average: no visits match group == ") +
                                group_name(group));
  }
  return group_average(member_grids, members);
}

}  // namespace lsor
