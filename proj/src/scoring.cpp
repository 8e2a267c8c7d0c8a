#include "vrae/scoring.hpp"

#include <algorithm>
#include <cstdio>
#include <limits>
#include <memory>
#include <numeric>
#include <set>
#include <sstream>

namespace vrae::scoring {

std::vector<int> max_weight_assignment(const Matrix& profit) {
  const Eigen::Index rows = profit.rows(), cols = profit.cols();
  const Eigen::Index n = std::max(rows, cols);
  if (n == 0) return {};
  // Square cost matrix, padded with zeros. Potentials-based Hungarian
  // algorithm, 1-indexed as in the classical formulation.
  const double big = profit.size() ? profit.maxCoeff() : 0.0;
  Matrix cost = Matrix::Constant(n, n, big);
  cost.topLeftCorner(rows, cols) = big - profit.array();
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(static_cast<std::size_t>(n + 1), 0.0), v(static_cast<std::size_t>(n + 1), 0.0);
  std::vector<Eigen::Index> p(static_cast<std::size_t>(n + 1), 0), way(static_cast<std::size_t>(n + 1), 0);
  for (Eigen::Index i = 1; i <= n; ++i) {
    p[0] = i;
    Eigen::Index j0 = 0;
    std::vector<double> minv(static_cast<std::size_t>(n + 1), inf);
    std::vector<bool> used(static_cast<std::size_t>(n + 1), false);
    do {
      used[static_cast<std::size_t>(j0)] = true;
      const Eigen::Index i0 = p[static_cast<std::size_t>(j0)];
      double delta = inf;
      Eigen::Index j1 = 0;
      for (Eigen::Index j = 1; j <= n; ++j) {
        if (used[static_cast<std::size_t>(j)]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[static_cast<std::size_t>(i0)] - v[static_cast<std::size_t>(j)];
        if (cur < minv[static_cast<std::size_t>(j)]) {
          minv[static_cast<std::size_t>(j)] = cur;
          way[static_cast<std::size_t>(j)] = j0;
        }
        if (minv[static_cast<std::size_t>(j)] < delta) {
          delta = minv[static_cast<std::size_t>(j)];
          j1 = j;
        }
      }
      for (Eigen::Index j = 0; j <= n; ++j) {
        if (used[static_cast<std::size_t>(j)]) {
          u[static_cast<std::size_t>(p[static_cast<std::size_t>(j)])] += delta;
          v[static_cast<std::size_t>(j)] -= delta;
        } else {
          minv[static_cast<std::size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (p[static_cast<std::size_t>(j0)] != 0);
    do {
      const Eigen::Index j1 = way[static_cast<std::size_t>(j0)];
      p[static_cast<std::size_t>(j0)] = p[static_cast<std::size_t>(j1)];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> out(static_cast<std::size_t>(rows), -1);
  for (Eigen::Index j = 1; j <= n; ++j) {
    const Eigen::Index i = p[static_cast<std::size_t>(j)];
    if (i >= 1 && i <= rows && j <= cols) out[static_cast<std::size_t>(i - 1)] = static_cast<int>(j - 1);
  }
  return out;
}

Matching match_labels(std::span<const int> predicted, std::span<const int> truth) {
  if (predicted.size() != truth.size())
    throw InvalidArgument("match_labels: predicted and truth lengths differ (" +
                          std::to_string(predicted.size()) + " vs " + std::to_string(truth.size()) + ")");
  std::set<int> cluster_set, class_set(truth.begin(), truth.end());
  for (int p : predicted)
    if (p != clustering::kNoise) cluster_set.insert(p);
  const std::vector<int> clusters(cluster_set.begin(), cluster_set.end());
  const std::vector<int> classes(class_set.begin(), class_set.end());
  auto index_of = [](const std::vector<int>& v, int x) {
    return static_cast<Eigen::Index>(std::lower_bound(v.begin(), v.end(), x) - v.begin());
  };

  Matrix counts = Matrix::Zero(static_cast<Eigen::Index>(clusters.size()),
                               static_cast<Eigen::Index>(classes.size()));
  for (std::size_t i = 0; i < predicted.size(); ++i)
    if (predicted[i] != clustering::kNoise)
      counts(index_of(clusters, predicted[i]), index_of(classes, truth[i])) += 1.0;

  Matching m;
  const auto assignment = max_weight_assignment(counts);
  for (std::size_t c = 0; c < clusters.size(); ++c)
    if (assignment[c] >= 0) m.cluster_to_class[clusters[c]] = classes[static_cast<std::size_t>(assignment[c])];
  m.relabeled.resize(predicted.size());
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const auto it = m.cluster_to_class.find(predicted[i]);
    m.relabeled[i] = it == m.cluster_to_class.end() ? clustering::kNoise : it->second;
    if (m.relabeled[i] == truth[i]) ++m.agreement;
  }
  return m;
}

Metrics classification_metrics(std::span<const int> matched, std::span<const int> truth) {
  if (matched.size() != truth.size()) throw InvalidArgument("classification_metrics: length mismatch");
  if (truth.empty()) throw InvalidArgument("classification_metrics: empty input");
  const std::set<int> class_set(truth.begin(), truth.end());
  const double n = static_cast<double>(truth.size());
  Metrics m;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) correct += matched[i] == truth[i];
  m.accuracy = static_cast<double>(correct) / n;
  for (int c : class_set) {
    std::size_t tp = 0, predicted = 0, support = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      tp += matched[i] == c && truth[i] == c;
      predicted += matched[i] == c;
      support += truth[i] == c;
    }
    ClassMetrics cm;
    cm.label = c;
    cm.support = support;
    cm.precision = predicted ? static_cast<double>(tp) / static_cast<double>(predicted) : 0.0;
    cm.recall = static_cast<double>(tp) / static_cast<double>(support);
    cm.f1 = cm.precision + cm.recall > 0.0
                ? 2.0 * cm.precision * cm.recall / (cm.precision + cm.recall)
                : 0.0;
    const double w = static_cast<double>(support) / n;
    m.precision += w * cm.precision;
    m.recall += w * cm.recall;
    m.f1 += w * cm.f1;
    m.per_class.push_back(cm);
  }
  return m;
}

double auc_from_scores(std::span<const double> scores, std::span<const bool> positive) {
  if (scores.size() != positive.size()) throw InvalidArgument("auc: length mismatch");
  const auto n = scores.size();
  const auto n_pos = static_cast<std::size_t>(std::count(positive.begin(), positive.end(), true));
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) throw InvalidArgument("auc: both classes must be present");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double mid_rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k)
      if (positive[order[k]]) rank_sum += mid_rank;
    i = j + 1;
  }
  const double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
  return (rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

double auc_from_labels(std::span<const bool> predicted_positive, std::span<const bool> positive) {
  if (predicted_positive.size() != positive.size()) throw InvalidArgument("auc: length mismatch");
  std::size_t tp = 0, tn = 0, pos = 0, neg = 0;
  for (std::size_t i = 0; i < positive.size(); ++i) {
    if (positive[i]) {
      ++pos;
      tp += predicted_positive[i];
    } else {
      ++neg;
      tn += !predicted_positive[i];
    }
  }
  if (pos == 0 || neg == 0) throw InvalidArgument("auc: both classes must be present");
  return 0.5 * (static_cast<double>(tp) / static_cast<double>(pos) +
                static_cast<double>(tn) / static_cast<double>(neg));
}

std::vector<double> anomaly_score(const Matrix& points, const Matrix& centroids, int normal_cluster) {
  if (centroids.rows() < 2) throw InvalidArgument("anomaly_score: need at least two centroids");
  if (normal_cluster < 0 || normal_cluster >= centroids.rows())
    throw InvalidArgument("anomaly_score: normal cluster index out of range");
  if (points.cols() != centroids.cols()) throw InvalidArgument("anomaly_score: dimension mismatch");
  std::vector<double> out(static_cast<std::size_t>(points.rows()));
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    const double to_normal = (points.row(i) - centroids.row(normal_cluster)).norm();
    double to_other = std::numeric_limits<double>::infinity();
    for (Eigen::Index c = 0; c < centroids.rows(); ++c)
      if (c != normal_cluster) to_other = std::min(to_other, (points.row(i) - centroids.row(c)).norm());
    out[static_cast<std::size_t>(i)] = to_normal - to_other;
  }
  return out;
}

double silhouette(const Matrix& points, std::span<const int> groups) {
  const auto n = static_cast<std::size_t>(points.rows());
  if (groups.size() != n) throw InvalidArgument("silhouette: points and groups lengths differ");
  const std::set<int> ids(groups.begin(), groups.end());
  if (ids.size() < 2) throw InvalidArgument("silhouette: need at least two groups");
  const std::vector<int> order(ids.begin(), ids.end());
  std::vector<std::size_t> size(order.size(), 0);
  std::vector<std::size_t> slot(n);
  for (std::size_t i = 0; i < n; ++i) {
    slot[i] = static_cast<std::size_t>(std::lower_bound(order.begin(), order.end(), groups[i]) - order.begin());
    ++size[slot[i]];
  }
  double total = 0.0;
  std::vector<double> sum(order.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (size[slot[i]] < 2) continue;
    std::fill(sum.begin(), sum.end(), 0.0);
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) sum[slot[j]] += (points.row(static_cast<Eigen::Index>(i)) - points.row(static_cast<Eigen::Index>(j))).norm();
    const double a = sum[slot[i]] / static_cast<double>(size[slot[i]] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (std::size_t g = 0; g < order.size(); ++g)
      if (g != slot[i]) b = std::min(b, sum[g] / static_cast<double>(size[g]));
    const double denom = std::max(a, b);
    if (denom > 0.0) total += (b - a) / denom;
  }
  return total / static_cast<double>(n);
}

ScoreReport score(const Matrix& points, const clustering::ClusterAssignment<double>& assignment,
                  std::span<const int> truth) {
  const auto& pred = assignment.labels;
  if (pred.size() != truth.size() || static_cast<std::size_t>(points.rows()) != truth.size())
    throw InvalidArgument("score: points, assignment and truth lengths differ");
  ScoreReport r;
  r.method = assignment.method;
  const std::set<int> class_set(truth.begin(), truth.end());
  const std::set<int> cluster_set(pred.begin(), pred.end());
  r.classes.assign(class_set.begin(), class_set.end());
  r.clusters.assign(cluster_set.begin(), cluster_set.end());
  r.confusion.assign(r.classes.size(), std::vector<std::size_t>(r.clusters.size(), 0));
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const auto row = std::lower_bound(r.classes.begin(), r.classes.end(), truth[i]) - r.classes.begin();
    const auto col = std::lower_bound(r.clusters.begin(), r.clusters.end(), pred[i]) - r.clusters.begin();
    ++r.confusion[static_cast<std::size_t>(row)][static_cast<std::size_t>(col)];
  }

  const Matching m = match_labels(pred, truth);
  r.cluster_to_class = m.cluster_to_class;
  const Metrics met = classification_metrics(m.relabeled, truth);
  r.accuracy = met.accuracy;
  r.precision = met.precision;
  r.recall = met.recall;
  r.f1 = met.f1;
  r.per_class = met.per_class;

  const std::size_t n = truth.size();
  const auto positive_store = std::make_unique<bool[]>(n);
  for (std::size_t i = 0; i < n; ++i) positive_store[i] = truth[i] != 0;
  const std::span<const bool> positive(positive_store.get(), n);
  const auto n_pos = std::count(positive.begin(), positive.end(), true);
  if (n_pos == 0 || static_cast<std::size_t>(n_pos) == n)
    throw InvalidArgument("score: truth must contain normal and anomalous samples");

  int normal_cluster = -1;
  for (const auto& [cluster, cls] : m.cluster_to_class)
    if (cls == 0) normal_cluster = cluster;
  if (assignment.centroids.rows() >= 2 && normal_cluster >= 0 &&
      assignment.centroids.cols() == points.cols()) {
    const auto s = anomaly_score(points, assignment.centroids, normal_cluster);
    r.auc = auc_from_scores(s, positive);
    r.auc_method = "centroid_distance";
  } else {
    // Noise and unmatched points count as wrong whatever their true class.
    const auto pred_store = std::make_unique<bool[]>(n);
    for (std::size_t i = 0; i < n; ++i)
      pred_store[i] = m.relabeled[i] == clustering::kNoise ? !positive[i] : m.relabeled[i] != 0;
    r.auc = auc_from_labels(std::span<const bool>(pred_store.get(), n), positive);
    r.auc_method = "hard_labels";
  }
  return r;
}

std::string format_table(const std::vector<ScoreReport>& reports) {
  std::ostringstream os;
  char buf[64];
  os << "| Metric    ";
  for (const auto& r : reports) {
    std::snprintf(buf, sizeof buf, "| %-14s", r.method.c_str());
    os << buf;
  }
  os << "|\n|-----------";
  for (std::size_t i = 0; i < reports.size(); ++i) os << "|---------------";
  os << "|\n";
  const std::pair<const char*, double ScoreReport::*> rows[] = {
      {"Accuracy", &ScoreReport::accuracy}, {"AUC", &ScoreReport::auc},
      {"Precision", &ScoreReport::precision}, {"Recall", &ScoreReport::recall},
      {"F1-score", &ScoreReport::f1}};
  for (const auto& [name, field] : rows) {
    std::snprintf(buf, sizeof buf, "| %-10s", name);
    os << buf;
    for (const auto& r : reports) {
      std::snprintf(buf, sizeof buf, "| %-14.4f", r.*field);
      os << buf;
    }
    os << "|\n";
  }
  return os.str();
}

}  // namespace vrae::scoring
