#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>
#include <stdexcept>
#include <vector>

namespace gcgan::eval {

/// Centered PCA onto the top-2 principal axes. Axis signs are fixed so the largest-magnitude loading
/// of each axis is positive, which makes the projection deterministic.
struct Pca2 {
  Eigen::VectorXd mean;
  Eigen::MatrixXd axes;  // dim x 2
  Eigen::Vector2d variance;

  Eigen::Vector2d project(const std::vector<double>& v) const {
    Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())) - mean;
    return axes.transpose() * x;
  }
};

inline Pca2 fit_pca2(const std::vector<std::vector<double>>& rows) {
  if (rows.size() < 3) throw std::invalid_argument("PCA needs at least 3 samples");
  const Eigen::Index d = static_cast<Eigen::Index>(rows.front().size());
  if (d < 2) throw std::invalid_argument("PCA needs at least 2 dimensions");
  Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), d);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (static_cast<Eigen::Index>(rows[i].size()) != d) throw std::invalid_argument("PCA rows differ in length");
    for (Eigen::Index j = 0; j < d; ++j) x(static_cast<Eigen::Index>(i), j) = rows[i][j];
  }
  Pca2 p;
  p.mean = x.colwise().mean().transpose();
  const Eigen::MatrixXd c = x.rowwise() - p.mean.transpose();
  const Eigen::MatrixXd cov = c.transpose() * c / static_cast<double>(rows.size());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  p.axes.resize(d, 2);
  for (int k = 0; k < 2; ++k) {
    Eigen::VectorXd a = es.eigenvectors().col(d - 1 - k);
    Eigen::Index arg;
    a.cwiseAbs().maxCoeff(&arg);
    if (a(arg) < 0) a = -a;
    p.axes.col(k) = a;
    p.variance(k) = es.eigenvalues()(d - 1 - k);
  }
  return p;
}

/// Mean silhouette coefficient with Euclidean distance. Points in singleton clusters score 0.
inline double silhouette_score(const std::vector<std::vector<double>>& points, const std::vector<int>& labels) {
  const std::size_t n = points.size();
  if (n != labels.size()) throw std::invalid_argument("silhouette: one label per point");
  std::map<int, std::size_t> sizes;
  for (int l : labels) ++sizes[l];
  if (sizes.size() < 2) throw std::invalid_argument("silhouette: need at least 2 clusters");
  std::vector<double> dist(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      double s = 0;
      for (std::size_t k = 0; k < points[i].size(); ++k) s += (points[i][k] - points[j][k]) * (points[i][k] - points[j][k]);
      dist[i * n + j] = dist[j * n + i] = std::sqrt(s);
    }
  double total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (sizes[labels[i]] < 2) continue;
    std::map<int, double> sum;
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) sum[labels[j]] += dist[i * n + j];
    const double a = sum[labels[i]] / static_cast<double>(sizes[labels[i]] - 1);
    double b = INFINITY;
    for (const auto& [l, s] : sum)
      if (l != labels[i]) b = std::min(b, s / static_cast<double>(sizes[l]));
    const double m = std::max(a, b);
    total += m > 0 ? (b - a) / m : 0.0;
  }
  return total / static_cast<double>(n);
}

struct ManifoldRow {
  std::vector<double> z;
  int label = -1;      // emotion label, -1 for path points
  int identity = -1;
  int path_step = -1;  // interpolation step for overlay rows
  double pc1 = 0, pc2 = 0;
};

struct ManifoldDump {
  std::vector<ManifoldRow> rows;
  Pca2 pca;
};

/// Projects sample embeddings (and optional path embeddings) with a PCA fitted on the samples.
inline ManifoldDump manifold_dump(std::vector<ManifoldRow> samples, const std::vector<std::vector<double>>& path = {}) {
  std::vector<std::vector<double>> zs;
  for (const auto& r : samples) zs.push_back(r.z);
  ManifoldDump d;
  d.pca = fit_pca2(zs);
  for (std::size_t t = 0; t < path.size(); ++t) {
    ManifoldRow r;
    r.z = path[t];
    r.path_step = static_cast<int>(t);
    samples.push_back(std::move(r));
  }
  for (auto& r : samples) {
    const auto p = d.pca.project(r.z);
    r.pc1 = p(0), r.pc2 = p(1);
  }
  d.rows = std::move(samples);
  return d;
}

inline void write_manifold_csv(std::ostream& out, const ManifoldDump& d) {
  out << "identity,label,path_step,pc1,pc2";
  const std::size_t dim = d.rows.empty() ? 0 : d.rows.front().z.size();
  for (std::size_t k = 0; k < dim; ++k) out << ",z" << k;
  out << '\n';
  out.precision(9);
  for (const auto& r : d.rows) {
    out << r.identity << ',' << r.label << ',' << r.path_step << ',' << r.pc1 << ',' << r.pc2;
    for (double v : r.z) out << ',' << v + 0.0;  // no "-0"
    out << '\n';
  }
}

}  // namespace gcgan::eval
