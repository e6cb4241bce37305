#pragma once

// Directory-level evaluation: pairs predicted and reference M269 files by relative path and
// writes one metrics CSV plus the error CDF and residual spectrum series.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "mlat/metrics/metrics.hpp"
#include "mlat/motion/io.hpp"
#include "mlat/motion/repr.hpp"

namespace mlat::pipeline {

/// Pairing failure between prediction and reference sets.
class PairingError : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

/// Sorted relative paths of every .m269 file below `root`.
inline std::vector<std::string> list_motions(const std::filesystem::path& root) {
  if (!std::filesystem::is_directory(root)) throw PairingError("not a directory: '" + root.string() + "'");
  std::vector<std::string> out;
  for (const auto& e : std::filesystem::recursive_directory_iterator(root)) {
    if (e.is_regular_file() && e.path().extension() == ".m269") out.push_back(std::filesystem::relative(e.path(), root).generic_string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

/// Both sequences decoded in one canonical frame: initial heading 0 at the origin.
inline motion::JointSequence canonical_joints(const Tensor& repr) {
  return motion::recover_joints(repr, motion::RecoverOptions{0.0, 0.0, 0.0});
}

struct EvalResult {
  std::vector<std::string> files;
  std::vector<double> mpjpe, pa_mpjpe;  // per sequence, m
  std::vector<metrics::MetricRow> rows;
  std::vector<std::pair<double, double>> cdf;  // mm
  metrics::SpectrumReport spectrum;
};

/// Every prediction needs a reference with the same relative path; extra references are ignored.
inline EvalResult evaluate_dirs(const std::filesystem::path& pred_dir, const std::filesystem::path& gt_dir) {
  EvalResult r;
  r.files = list_motions(pred_dir);
  if (r.files.empty()) throw PairingError("no .m269 files under '" + pred_dir.string() + "'");
  for (const auto& f : r.files) {
    if (!std::filesystem::exists(gt_dir / f)) throw PairingError("no reference for '" + f + "' under '" + gt_dir.string() + "'");
  }
  const std::size_t n = r.files.size();
  r.mpjpe.resize(n);
  r.pa_mpjpe.resize(n);
  std::vector<double> per_joint(motion::kJoints, 0.0);
  double ape = 0, ave = 0, ade = 0, fde = 0, jit_pred = 0, jit_gt = 0;
  std::size_t failed = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const Tensor pred = motion::read_m269((pred_dir / r.files[i]).string());
    const Tensor gt = motion::read_m269((gt_dir / r.files[i]).string());
    if (pred.rows() != gt.rows()) {
      throw PairingError("'" + r.files[i] + "': " + std::to_string(pred.rows()) + " predicted frames vs " + std::to_string(gt.rows()));
    }
    const auto jp = canonical_joints(pred), jg = canonical_joints(gt);
    const auto e = metrics::mpjpe(jp, jg);
    const auto pa = metrics::pa_mpjpe(jp, jg);
    r.mpjpe[i] = e.value;
    r.pa_mpjpe[i] = pa.value;
    failed += pa.failed_frames;
    for (std::size_t j = 0; j < motion::kJoints; ++j) per_joint[j] += e.per_joint[j] / static_cast<double>(n);
    const auto av = metrics::ape_ave(jp, jg);
    const auto fd = metrics::ade_fde(jp, jg);
    ape += av.ape_cm / static_cast<double>(n);
    ave += av.ave_cm_s / static_cast<double>(n);
    ade += fd.ade / static_cast<double>(n);
    fde += fd.fde / static_cast<double>(n);
    for (std::size_t j = 0; j < motion::kJoints; ++j) {
      jit_pred += metrics::jitter_std(jp, j) / static_cast<double>(n * motion::kJoints);
      jit_gt += metrics::jitter_std(jg, j) / static_cast<double>(n * motion::kJoints);
    }
    const auto s = metrics::residual_spectrum(jp, jg);
    if (i == 0) {
      r.spectrum = s;
      for (auto& p : r.spectrum.power) p = 0.0;
      r.spectrum.low = r.spectrum.mid = r.spectrum.high = 0.0;
    }
    if (s.power.size() != r.spectrum.power.size()) throw PairingError("residual spectrum needs equal sequence lengths");
    for (std::size_t k = 0; k < s.power.size(); ++k) r.spectrum.power[k] += s.power[k] / static_cast<double>(n);
    r.spectrum.low += s.low / static_cast<double>(n);
    r.spectrum.mid += s.mid / static_cast<double>(n);
    r.spectrum.high += s.high / static_cast<double>(n);
  }
  auto mean = [](const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x / static_cast<double>(v.size());
    return s;
  };
  std::vector<double> mm, pa_mm;
  for (std::size_t i = 0; i < n; ++i) {
    mm.push_back(1000.0 * r.mpjpe[i]);
    pa_mm.push_back(1000.0 * r.pa_mpjpe[i]);
  }
  r.cdf = metrics::error_cdf(mm);
  auto& rows = r.rows;
  rows.push_back({"pairs", "all", static_cast<double>(n), "count"});
  rows.push_back({"mpjpe", "all", mean(r.mpjpe), "m"});
  rows.push_back({"pa_mpjpe", "all", mean(r.pa_mpjpe), "m"});
  rows.push_back({"pa_failed_frames", "all", static_cast<double>(failed), "count"});
  rows.push_back({"ape", "all", ape, "cm"});
  rows.push_back({"ave", "all", ave, "cm/s"});
  rows.push_back({"ade", "all", ade, "m"});
  rows.push_back({"fde", "all", fde, "m"});
  rows.push_back({"jitter_std", "pred", jit_pred, "m/s^2"});
  rows.push_back({"jitter_std", "gt", jit_gt, "m/s^2"});
  rows.push_back({"residual_power", "low", r.spectrum.low, "m^2"});
  rows.push_back({"residual_power", "mid", r.spectrum.mid, "m^2"});
  rows.push_back({"residual_power", "high", r.spectrum.high, "m^2"});
  rows.push_back({"mpjpe_p50", "all", metrics::cdf_quantile(r.cdf, 0.5), "mm"});
  rows.push_back({"mpjpe_p90", "all", metrics::cdf_quantile(r.cdf, 0.9), "mm"});
  rows.push_back({"motion_accuracy", "all", metrics::motion_accuracy(pa_mm), "fraction"});
  for (std::size_t j = 0; j < motion::kJoints; ++j) rows.push_back({"mpjpe", "joint" + std::to_string(j), per_joint[j], "m"});
  return r;
}

inline std::ofstream open_output(const std::filesystem::path& path, const std::string& hash) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw FormatError("cannot write '" + path.string() + "'");
  f << "# config_hash: " << hash << '\n';
  return f;
}

inline void write_metrics(const std::filesystem::path& path, const std::string& hash, const std::vector<metrics::MetricRow>& rows) {
  auto f = open_output(path, hash);
  metrics::write_metric_csv(f, rows);
}

/// metrics.csv, mpjpe_cdf.csv and residual_spectrum.csv in `out_dir`.
inline void write_eval(const std::filesystem::path& out_dir, const std::string& hash, const EvalResult& r) {
  std::filesystem::create_directories(out_dir);
  write_metrics(out_dir / "metrics.csv", hash, r.rows);
  {
    auto f = open_output(out_dir / "mpjpe_cdf.csv", hash);
    metrics::write_series_csv(f, "mpjpe_mm", "fraction", r.cdf);
  }
  auto f = open_output(out_dir / "residual_spectrum.csv", hash);
  metrics::write_series_csv(f, "frequency_hz", "power_m2", metrics::spectrum_series(r.spectrum));
}

}  // namespace mlat::pipeline
