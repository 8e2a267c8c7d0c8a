#pragma once

#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "vrae/clustering.hpp"
#include "vrae/numerics.hpp"

namespace vrae::scoring {

/// Maximum-profit one-to-one assignment (Kuhn-Munkres). Returns, for each
/// row, the matched column or -1 when the matrix has more rows than columns.
std::vector<int> max_weight_assignment(const Matrix& profit);

struct Matching {
  std::map<int, int> cluster_to_class;  // matched clusters only
  std::vector<int> relabeled;           // class label, or kNoise when unmatched
  std::size_t agreement = 0;
};

/// Optimal cluster -> class matching on the confusion counts. Noise points
/// and clusters left without a partner keep the label kNoise.
Matching match_labels(std::span<const int> predicted, std::span<const int> truth);

struct ClassMetrics {
  int label = 0;
  std::size_t support = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct Metrics {
  double accuracy = 0.0;
  double precision = 0.0;  // support-weighted
  double recall = 0.0;     // support-weighted, equals accuracy
  double f1 = 0.0;         // support-weighted
  std::vector<ClassMetrics> per_class;
};

/// `matched` holds class labels (kNoise counts as wrong for every class).
Metrics classification_metrics(std::span<const int> matched, std::span<const int> truth);

/// Mann-Whitney AUC with mid-ranks for ties; `positive[i]` marks the
/// anomalous class.
double auc_from_scores(std::span<const double> scores, std::span<const bool> positive);

/// Two-point ROC area of a hard classifier: (TPR + TNR) / 2.
double auc_from_labels(std::span<const bool> predicted_positive, std::span<const bool> positive);

/// d(x, normal centroid) - min over the other centroids; larger is more anomalous.
std::vector<double> anomaly_score(const Matrix& points, const Matrix& centroids, int normal_cluster);

/// Mean silhouette coefficient of `groups` in Euclidean space. Points alone
/// in their group contribute 0. Needs at least two groups.
double silhouette(const Matrix& points, std::span<const int> groups);

struct ScoreReport {
  std::string method;
  std::vector<int> classes;   // row labels of the confusion matrix
  std::vector<int> clusters;  // column labels (kNoise first when present)
  std::vector<std::vector<std::size_t>> confusion;
  std::map<int, int> cluster_to_class;
  double accuracy = 0.0;
  double auc = 0.0;
  std::string auc_method;  // "centroid_distance" or "hard_labels"
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::vector<ClassMetrics> per_class;
};

/// Matches `assignment` to `truth` and fills every metric. The AUC treats
/// class 0 as normal and every other class as anomalous.
ScoreReport score(const Matrix& points, const clustering::ClusterAssignment<double>& assignment,
                  std::span<const int> truth);

/// Aligned metric-by-method table.
std::string format_table(const std::vector<ScoreReport>& reports);

}  // namespace vrae::scoring
