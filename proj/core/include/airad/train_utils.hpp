#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace airad {

struct OneCycleState {
  float max_lr = 1e-3f;
  std::size_t total_steps = 100;
  double pct_start = 0.3;
  float div_factor = 25.0f;
  float final_div_factor = 1e4f;
  std::size_t step = 0;

  void validate() const;
  /// round(pct_start * total_steps): the step at which lr equals max_lr.
  std::size_t peak_step() const;
  float initial_lr() const { return max_lr / div_factor; }
  float final_lr() const { return max_lr / final_div_factor; }
};

/// Cosine warm-up to max_lr, then cosine anneal to max_lr / final_div_factor.
/// StepOutOfRange unless step <= total_steps.
float onecycle_lr(const OneCycleState& state, std::size_t step);
/// lr at state.step, then advances state.step.
float onecycle_advance(OneCycleState& state);

enum class PlateauMode { Min, Max };

struct PlateauState {
  float lr = 1e-3f;
  float factor = 0.1f;
  std::size_t patience = 10;
  PlateauMode mode = PlateauMode::Min;
  float min_lr = 0.0f;
  double best = 0.0;
  bool has_best = false;
  std::size_t bad_epochs = 0;
};

/// One epoch of reduce-on-plateau. Strict improvement resets the counter;
/// once the counter exceeds patience the lr is cut and the counter resets.
PlateauState plateau_step(PlateauState state, double metric);

inline constexpr std::size_t kFoldCount = 5;

struct FoldPlan {
  std::uint64_t seed = 0;
  std::size_t n_records = 0;
  std::array<std::vector<std::size_t>, kFoldCount> folds;

  /// Every record index outside fold `i`.
  std::vector<std::size_t> training(std::size_t i) const;
  const std::vector<std::size_t>& validation(std::size_t i) const { return folds.at(i); }
  std::string to_json() const;
  static FoldPlan from_json(const std::string& text);
};

/// Seeded shuffle then round-robin assignment. TooFewRecords below 5.
FoldPlan make_folds(std::size_t n_records, std::uint64_t seed);

enum class SdKind { Sample, Population };

struct MeanSd {
  double mean = 0.0;
  double sd = 0.0;
  std::size_t n = 0;
};

MeanSd mean_sd(const std::vector<double>& values, SdKind kind = SdKind::Sample);
/// "mean (SD)" with fixed decimals, the layout of published result tables.
std::string format_mean_sd(const MeanSd& m, int decimals = 2);

/// metric name -> value, one map per fold.
using FoldMetrics = std::map<std::string, double>;

struct FoldAggregate {
  SdKind sd_kind = SdKind::Sample;
  std::map<std::string, MeanSd> metrics;

  std::string to_json() const;
  /// Two-row text table: metric names, then "mean (SD)" cells.
  std::string to_table(int decimals = 2) const;
};

/// Metrics missing from some folds aggregate over the folds that report them.
FoldAggregate aggregate_folds(const std::vector<FoldMetrics>& per_fold, SdKind kind = SdKind::Sample);

}  // namespace airad
