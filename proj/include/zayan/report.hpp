#pragma once

#include <string>

#include "json.hpp"
#include "zayan/diagnostics.hpp"

namespace zayan::app {

// Structured run report. Every populated section records the operation and
// the parameters that produced it. Timing data (wall-clock, latency) lives
// under "timing" and is excluded from the canonical content hash so that
// reruns with the same seed hash identically.
class ReportBuilder {
 public:
  ReportBuilder();

  void set_run_meta(std::uint64_t seed, const std::string& config_hash_hex,
                    const std::string& dataset_fingerprint);
  void set_wall_clock_seconds(double seconds);
  void set_latency(const zt::LatencyStats& latency);

  void add_cv(const diag::CVResult& cv, std::size_t k, std::uint64_t seed);
  void add_calibration(const diag::ReliabilityBins& bins, std::size_t n_bins);
  void add_selective(const std::vector<diag::SelectivePoint>& curve);
  void add_margins_topk(const diag::MarginTopk& mk);
  void add_robustness(const std::vector<diag::RobustnessPoint>& sweep,
                      const std::string& mode, std::uint64_t seed);
  void add_sanity(const diag::SanityModes& modes, std::uint64_t seed);
  void add_ood(const std::vector<diag::OodRegime>& regimes, std::uint64_t seed);
  void add_sensitivity(const diag::SensitivityReport& s, std::uint64_t seed);
  void add_triage(const diag::TriageMetrics& t, int positive_class);
  void add_importance(const std::vector<diag::ImportanceEntry>& ranking,
                      std::uint64_t seed);
  void add_feature_geometry(const diag::EmbeddingGeometry& g);
  void add_sample_geometry(const diag::EmbeddingGeometry& g, std::size_t n,
                           std::size_t d);
  void add_tta(const diag::TtaReport& t, std::uint64_t seed);
  void add_note(const std::string& key, const std::string& status,
                const std::string& text);

  bool has_section(const std::string& name) const;
  const nlohmann::json& json() const { return root_; }

  // serialized report without the "timing" subtree, keys sorted
  std::string canonical_dump() const;
  std::uint64_t content_hash() const;

  // writes report.json plus per-curve CSV files into `dir`
  void write(const std::string& dir) const;

 private:
  nlohmann::json root_;
};

}  // namespace zayan::app
