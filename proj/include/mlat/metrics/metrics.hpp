#pragma once

// Pose, trajectory, distribution, spectral and temporal metrics over joint sequences.

#include <Eigen/Dense>
#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <complex>
#include <ostream>
#include <string>
#include <vector>

#include "mlat/motion/repr.hpp"

namespace mlat::metrics {

using motion::JointSequence;
using motion::Vec3;

struct ErrorReport {
  double value = 0.0;
  std::vector<double> per_joint;
  std::string units = "m";
  std::size_t failed_frames = 0;  // PA-MPJPE frames whose alignment was degenerate
};

inline void require_pair(const JointSequence& a, const JointSequence& b, const char* what) {
  if (a.size() != b.size()) {
    throw ShapeError(std::string(what) + ": " + std::to_string(a.size()) + " vs " + std::to_string(b.size()) + " frames");
  }
  if (a.size() == 0) throw InvalidArgument(std::string(what) + ": empty sequence");
}

inline ErrorReport mpjpe(const JointSequence& pred, const JointSequence& gt) {
  require_pair(pred, gt, "mpjpe");
  ErrorReport r;
  r.per_joint.assign(motion::kJoints, 0.0);
  for (std::size_t t = 0; t < pred.size(); ++t) {
    for (std::size_t j = 0; j < motion::kJoints; ++j) r.per_joint[j] += (pred.at(t, j) - gt.at(t, j)).norm();
  }
  for (auto& v : r.per_joint) {
    v /= static_cast<double>(pred.size());
    r.value += v / static_cast<double>(motion::kJoints);
  }
  return r;
}

struct Similarity {
  double scale = 1.0;
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Vec3 translation = Vec3::Zero();
  bool ok = true;
};

/// Least-squares similarity mapping the columns of x onto y (3 x N each); proper rotations only.
inline Similarity procrustes(const Eigen::Matrix3Xd& x, const Eigen::Matrix3Xd& y) {
  Similarity s;
  const Vec3 mx = x.rowwise().mean();
  const Vec3 my = y.rowwise().mean();
  const Eigen::Matrix3Xd xc = x.colwise() - mx;
  const Eigen::Matrix3Xd yc = y.colwise() - my;
  const double var = xc.squaredNorm();
  if (var < 1e-18) {
    s.ok = false;
    return s;
  }
  const Eigen::JacobiSVD<Eigen::Matrix3d> svd(yc * xc.transpose(), Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0) d(2, 2) = -1.0;
  s.rotation = svd.matrixU() * d * svd.matrixV().transpose();
  s.scale = (svd.singularValues().asDiagonal() * d).trace() / var;
  s.translation = my - s.scale * s.rotation * mx;
  return s;
}

inline Eigen::Matrix3Xd frame_matrix(const JointSequence& s, std::size_t t) {
  Eigen::Matrix3Xd m(3, motion::kJoints);
  for (std::size_t j = 0; j < motion::kJoints; ++j) m.col(static_cast<Eigen::Index>(j)) = s.at(t, j);
  return m;
}

/// MPJPE after per-frame similarity alignment of pred onto gt. Degenerate frames (all predicted
/// joints coincident) are scored unaligned and counted in failed_frames.
inline ErrorReport pa_mpjpe(const JointSequence& pred, const JointSequence& gt) {
  require_pair(pred, gt, "pa_mpjpe");
  ErrorReport r;
  r.per_joint.assign(motion::kJoints, 0.0);
  for (std::size_t t = 0; t < pred.size(); ++t) {
    const Eigen::Matrix3Xd x = frame_matrix(pred, t);
    const Eigen::Matrix3Xd y = frame_matrix(gt, t);
    const Similarity s = procrustes(x, y);
    if (!s.ok) ++r.failed_frames;
    for (std::size_t j = 0; j < motion::kJoints; ++j) {
      const auto c = static_cast<Eigen::Index>(j);
      const Vec3 aligned = s.ok ? Vec3(s.scale * s.rotation * x.col(c) + s.translation) : Vec3(x.col(c));
      r.per_joint[j] += (aligned - y.col(c)).norm();
    }
  }
  for (auto& v : r.per_joint) {
    v /= static_cast<double>(pred.size());
    r.value += v / static_cast<double>(motion::kJoints);
  }
  return r;
}

struct ApeAve {
  double ape_cm = 0.0;
  double ave_cm_s = 0.0;
};

/// Mean joint position error and mean finite-difference velocity error, in cm and cm/s.
inline ApeAve ape_ave(const JointSequence& pred, const JointSequence& gt) {
  require_pair(pred, gt, "ape_ave");
  if (pred.size() < 2) throw InvalidArgument("ape_ave: velocity error needs at least 2 frames");
  const double n = static_cast<double>(motion::kJoints);
  ApeAve out;
  for (std::size_t t = 0; t < pred.size(); ++t) {
    for (std::size_t j = 0; j < motion::kJoints; ++j) out.ape_cm += (pred.at(t, j) - gt.at(t, j)).norm();
  }
  out.ape_cm *= 100.0 / (n * static_cast<double>(pred.size()));
  for (std::size_t t = 0; t + 1 < pred.size(); ++t) {
    for (std::size_t j = 0; j < motion::kJoints; ++j) {
      const Vec3 vp = (pred.at(t + 1, j) - pred.at(t, j)) * pred.fps;
      const Vec3 vg = (gt.at(t + 1, j) - gt.at(t, j)) * gt.fps;
      out.ave_cm_s += (vp - vg).norm();
    }
  }
  out.ave_cm_s *= 100.0 / (n * static_cast<double>(pred.size() - 1));
  return out;
}

struct AdeFde {
  double ade = 0.0;
  double fde = 0.0;
};

inline AdeFde ade_fde(const JointSequence& pred, const JointSequence& gt) {
  require_pair(pred, gt, "ade_fde");
  AdeFde out;
  for (std::size_t t = 0; t < pred.size(); ++t) {
    double frame = 0;
    for (std::size_t j = 0; j < motion::kJoints; ++j) frame += (pred.at(t, j) - gt.at(t, j)).norm();
    frame /= static_cast<double>(motion::kJoints);
    out.ade += frame;
    if (t + 1 == pred.size()) out.fde = frame;
  }
  out.ade /= static_cast<double>(pred.size());
  return out;
}

struct GaussianStats {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

/// Mean and unbiased covariance of the rows of an N x k tensor.
inline GaussianStats gaussian_stats(const Tensor& features) {
  if (features.rank() != 2 || features.rows() < 2) throw InvalidArgument("gaussian_stats: need an N x k matrix with N >= 2");
  const auto n = static_cast<Eigen::Index>(features.rows());
  const auto k = static_cast<Eigen::Index>(features.cols());
  const Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> m(features.raw().data(), n, k);
  GaussianStats s;
  s.mean = m.colwise().mean().transpose();
  const Eigen::MatrixXd c = m.rowwise() - s.mean.transpose();
  s.cov = (c.transpose() * c) / static_cast<double>(n - 1);
  return s;
}

/// Symmetric PSD square root with negative eigenvalues clipped to 0.
inline Eigen::MatrixXd sqrt_psd(const Eigen::MatrixXd& m) {
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()));
  const Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

inline double frechet_from_stats(const GaussianStats& a, const GaussianStats& b, double reg = 1e-6) {
  if (a.mean.size() != b.mean.size()) throw ShapeError("frechet: feature dimensions differ");
  const auto k = a.mean.size();
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(k, k);
  const Eigen::MatrixXd sa = a.cov + reg * I;
  const Eigen::MatrixXd sb = b.cov + reg * I;
  for (const Eigen::MatrixXd* s : {&sa, &sb}) {
    const double lo = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(*s, Eigen::EigenvaluesOnly).eigenvalues().minCoeff();
    if (lo < -1e-9) throw NumericalError("frechet: covariance is not PSD after regularization");
  }
  const Eigen::MatrixXd ra = sqrt_psd(sa);
  const double cross = sqrt_psd(ra * sb * ra).trace();
  return std::max(0.0, (a.mean - b.mean).squaredNorm() + sa.trace() + sb.trace() - 2.0 * cross);
}

inline double frechet_gaussian(const Tensor& features_a, const Tensor& features_b) {
  return frechet_from_stats(gaussian_stats(features_a), gaussian_stats(features_b));
}

/// Acceleration spread of one joint: sqrt of the summed per-axis variances of the second
/// difference (m/s^2).
inline double jitter_std(const JointSequence& joints, std::size_t joint) {
  if (joints.size() < 3) throw InvalidArgument("jitter_std: need at least 3 frames");
  if (joint >= motion::kJoints) throw InvalidArgument("jitter_std: joint index out of range");
  const double f2 = joints.fps * joints.fps;
  const std::size_t n = joints.size() - 2;
  double total = 0;
  for (int axis = 0; axis < 3; ++axis) {
    std::vector<double> acc(n);
    for (std::size_t t = 0; t < n; ++t) {
      acc[t] = (joints.at(t + 2, joint)[axis] - 2.0 * joints.at(t + 1, joint)[axis] + joints.at(t, joint)[axis]) * f2;
    }
    double mean = 0;
    for (double a : acc) mean += a / static_cast<double>(n);
    double var = 0;
    for (double a : acc) var += (a - mean) * (a - mean) / static_cast<double>(n);
    total += var;
  }
  return std::sqrt(total);
}

struct SpectrumReport {
  std::vector<double> frequencies;  // Hz, 0 .. fps/2
  std::vector<double> power;        // one-sided mean residual power per bin
  double low = 0.0;                 // [0, 2) Hz
  double mid = 0.0;                 // [2, 6) Hz
  double high = 0.0;                // [6, fps/2] Hz
  double total() const { return low + mid + high; }
};

/// Unwindowed FFT of the pred - gt residual of every joint coordinate. Power is normalized so
/// the bins sum to the mean squared residual (Parseval), then averaged over the 66 channels.
inline SpectrumReport residual_spectrum(const JointSequence& pred, const JointSequence& gt) {
  require_pair(pred, gt, "residual_spectrum");
  const std::size_t T = pred.size();
  if (T < 8) throw InvalidArgument("residual_spectrum: need at least 8 frames");
  const std::size_t bins = T / 2 + 1;
  SpectrumReport r;
  r.frequencies.resize(bins);
  r.power.assign(bins, 0.0);
  for (std::size_t k = 0; k < bins; ++k) r.frequencies[k] = static_cast<double>(k) * pred.fps / static_cast<double>(T);
  Eigen::FFT<double> fft;
  std::vector<double> signal(T);
  std::vector<std::complex<double>> spec;
  const double channels = 3.0 * motion::kJoints;
  for (std::size_t j = 0; j < motion::kJoints; ++j) {
    for (int axis = 0; axis < 3; ++axis) {
      for (std::size_t t = 0; t < T; ++t) signal[t] = pred.at(t, j)[axis] - gt.at(t, j)[axis];
      fft.fwd(spec, signal);
      for (std::size_t k = 0; k < bins; ++k) {
        const bool paired = k != 0 && !(T % 2 == 0 && k == T / 2);
        const double p = std::norm(spec[k]) / static_cast<double>(T * T) * (paired ? 2.0 : 1.0);
        r.power[k] += p / channels;
      }
    }
  }
  for (std::size_t k = 0; k < bins; ++k) {
    const double f = r.frequencies[k];
    (f < 2.0 ? r.low : f < 6.0 ? r.mid : r.high) += r.power[k];
  }
  return r;
}

/// Empirical CDF: (threshold, fraction of values <= threshold) at each distinct value.
inline std::vector<std::pair<double, double>> error_cdf(std::vector<double> values) {
  if (values.empty()) throw InvalidArgument("error_cdf: empty list");
  std::sort(values.begin(), values.end());
  std::vector<std::pair<double, double>> curve;
  const double n = static_cast<double>(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i + 1 < values.size() && values[i + 1] == values[i]) continue;
    curve.emplace_back(values[i], static_cast<double>(i + 1) / n);
  }
  return curve;
}

/// Smallest threshold whose CDF reaches q.
inline double cdf_quantile(const std::vector<std::pair<double, double>>& curve, double q) {
  for (const auto& [x, f] : curve) {
    if (f >= q) return x;
  }
  return curve.back().first;
}

/// Fraction of values <= threshold_mm.
inline double motion_accuracy(const std::vector<double>& pa_mpjpe_mm, double threshold_mm = 100.0) {
  if (pa_mpjpe_mm.empty()) throw InvalidArgument("motion_accuracy: empty list");
  std::size_t hits = 0;
  for (double v : pa_mpjpe_mm) hits += v <= threshold_mm ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(pa_mpjpe_mm.size());
}

struct MetricRow {
  std::string metric;
  std::string scope;
  double value = 0.0;
  std::string units;
};

inline void write_metric_csv(std::ostream& os, const std::vector<MetricRow>& rows) {
  os << "metric,scope,value,units\n";
  const auto old = os.precision(17);
  for (const auto& r : rows) os << r.metric << ',' << r.scope << ',' << r.value << ',' << r.units << '\n';
  os.precision(old);
}

inline void write_series_csv(std::ostream& os, const std::string& x_name, const std::string& y_name,
                             const std::vector<std::pair<double, double>>& series) {
  os << x_name << ',' << y_name << '\n';
  const auto old = os.precision(17);
  for (const auto& [x, y] : series) os << x << ',' << y << '\n';
  os.precision(old);
}

inline std::vector<std::pair<double, double>> spectrum_series(const SpectrumReport& s) {
  std::vector<std::pair<double, double>> out;
  for (std::size_t k = 0; k < s.frequencies.size(); ++k) out.emplace_back(s.frequencies[k], s.power[k]);
  return out;
}

}  // namespace mlat::metrics
