#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "hjbppo/checkpoint.hpp"

namespace hjbppo::metrics {

// One finished episode's diagnostics. The losses are evaluated at episode end
// with the value network current at that moment, averaging the squared
// residuals over the episode's transitions (boundary rows are skipped for the
// continuous-time residual, matching training).
struct EpisodeRecord {
  int episode = 0;            // 0-based, strictly increasing
  std::uint64_t timestep = 0; // global env steps when the episode ended
  double reward = 0.0;        // total undiscounted episode reward
  int length = 0;             // steps in the episode (not exported to CSV)
  double hjb_loss = 0.0;
  double bellman_loss = 0.0;
};

// Trailing-window mean / population-std over the last `window` pushes.
class SmoothedSeries {
 public:
  explicit SmoothedSeries(int window = 50);

  void push(double value);
  int count() const { return total_; }
  int window() const { return window_; }
  // Statistics over the trailing min(count, window) values; mean of zero
  // pushes is 0 by convention.
  double mean() const;
  double std() const;

 private:
  int window_ = 50;
  int total_ = 0;
  std::deque<double> ring_;  // chronological, size <= window
};

// Per-row snapshot of the smoothed columns, captured at record time so the
// CSV export is a pure serialization.
struct EpisodeRow {
  EpisodeRecord record;
  double reward_mean = 0.0;
  double reward_std = 0.0;
  double hjb_mean = 0.0;
  double bellman_mean = 0.0;
};

// Per-iteration training aggregates (logged alongside the per-episode CSV).
struct IterationRecord {
  int iteration = 0;
  std::uint64_t timestep = 0;
  int episodes_finished = 0;
  double policy_objective = 0.0;
  double value_total = 0.0;
  double bellman_mse = 0.0;
  double hjb_mse = 0.0;
  double clip_fraction = 0.0;
  double mean_ratio = 0.0;
  double approx_kl = 0.0;
  double policy_grad_norm = 0.0;
  double value_grad_norm = 0.0;
  double lambda_hjb_effective = 0.0;
};

// Collects episode records, maintains the 50-episode smoothed series, and
// exports the CSV/SVG artifacts. Single writer; exports are const.
class MetricsSink {
 public:
  explicit MetricsSink(int window = 50);

  // Requires record.episode == previous episode + 1 (starting at any value
  // for the first record); throws std::invalid_argument otherwise.
  void record_episode(const EpisodeRecord& rec);
  void record_iteration(const IterationRecord& rec);

  const std::vector<EpisodeRow>& rows() const { return rows_; }
  const std::vector<IterationRecord>& iterations() const { return iterations_; }
  int window() const { return window_; }

  double reward_mean() const { return reward_.mean(); }
  double reward_std() const { return reward_.std(); }
  double hjb_mean() const { return hjb_.mean(); }
  double bellman_mean() const { return bellman_.mean(); }

  // Header: episode, timestep, reward, reward_mean50, reward_std50,
  // hjb_loss, hjb_mean50, bellman_loss, bellman_mean50. Values use
  // shortest-round-trip decimal formatting, so re-parsing is exact and
  // re-exporting is byte-identical.
  void export_csv(const std::filesystem::path& path) const;
  void export_iterations_csv(const std::filesystem::path& path) const;

  // Parses a file written by export_csv (used for round-trip checks and by
  // the comparison tooling).
  static std::vector<EpisodeRow> parse_csv(const std::filesystem::path& path);

  // Checkpoint support: serializes raw records; smoothed state is rebuilt by
  // re-pushing on load, which reproduces it exactly.
  void serialize(io::BinaryWriter& w) const;
  void deserialize(io::BinaryReader& r);

 private:
  int window_ = 50;
  std::vector<EpisodeRow> rows_;
  std::vector<IterationRecord> iterations_;
  SmoothedSeries reward_, hjb_, bellman_;
};

// --- SVG line charts --- //

struct SvgSeries {
  std::string label;
  std::string color;          // any CSS color
  std::vector<double> x;
  std::vector<double> mean;   // polyline
  std::vector<double> std;    // optional shaded mean +/- std band (may be empty)
};

struct SvgOptions {
  std::string title;
  std::string x_label = "episode";
  std::string y_label;
  bool log_y = false;   // positive values only; nonpositive points are dropped
  int width = 960;
  int height = 540;
};

// Self-contained static SVG: axes with tick labels, one line per series,
// optional shaded band, legend from series labels. Deterministic markup.
void export_svg(const std::filesystem::path& path,
                std::span<const SvgSeries> series, const SvgOptions& options);

// Convenience: the three per-run chart families (reward with band, the two
// loss curves on a log axis) from one sink.
void export_run_charts(const MetricsSink& sink,
                       const std::filesystem::path& directory,
                       const std::string& run_label);

}  // namespace hjbppo::metrics
