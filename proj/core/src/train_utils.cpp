#include "airad/train_utils.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "airad/error.hpp"

namespace airad {
namespace {

// Cosine interpolation from `start` (t = 0) to `end` (t = 1).
double cosine_between(double start, double end, double t) {
  return end + (start - end) * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

}  // namespace

void OneCycleState::validate() const {
  if (!(pct_start > 0.0 && pct_start < 1.0)) throw Error(ErrorCode::InvalidArgument, "pct_start must lie in (0, 1)");
  if (total_steps == 0) throw Error(ErrorCode::InvalidArgument, "total_steps must be positive");
  if (!(max_lr > 0.0f) || !(div_factor > 0.0f) || !(final_div_factor > 0.0f))
    throw Error(ErrorCode::InvalidArgument, "learning rates and factors must be positive");
}

std::size_t OneCycleState::peak_step() const {
  return static_cast<std::size_t>(std::llround(pct_start * static_cast<double>(total_steps)));
}

float onecycle_lr(const OneCycleState& state, std::size_t step) {
  state.validate();
  if (step > state.total_steps)
    throw Error(ErrorCode::StepOutOfRange,
                "step " + std::to_string(step) + " beyond total_steps " + std::to_string(state.total_steps));
  const double max_lr = state.max_lr;
  const double lo = max_lr / state.div_factor;
  const double hi_end = max_lr / state.final_div_factor;
  const std::size_t peak = state.peak_step();
  if (step == peak) return state.max_lr;
  double lr;
  if (step < peak) {
    lr = cosine_between(lo, max_lr, static_cast<double>(step) / static_cast<double>(peak));
  } else {
    const double span = static_cast<double>(state.total_steps - peak);
    lr = cosine_between(max_lr, hi_end, static_cast<double>(step - peak) / span);
  }
  return std::min(static_cast<float>(lr), state.max_lr);
}

float onecycle_advance(OneCycleState& state) {
  const float lr = onecycle_lr(state, state.step);
  ++state.step;
  return lr;
}

PlateauState plateau_step(PlateauState state, double metric) {
  if (!std::isfinite(metric)) throw Error(ErrorCode::InvalidArgument, "plateau metric must be finite");
  const bool improved = !state.has_best || (state.mode == PlateauMode::Min ? metric < state.best : metric > state.best);
  if (improved) {
    state.best = metric;
    state.has_best = true;
    state.bad_epochs = 0;
    return state;
  }
  ++state.bad_epochs;
  if (state.bad_epochs > state.patience) {
    state.lr = std::max(state.lr * state.factor, state.min_lr);
    state.bad_epochs = 0;
  }
  return state;
}

std::vector<std::size_t> FoldPlan::training(std::size_t i) const {
  std::vector<std::size_t> out;
  for (std::size_t f = 0; f < kFoldCount; ++f)
    if (f != i) out.insert(out.end(), folds.at(f).begin(), folds.at(f).end());
  std::sort(out.begin(), out.end());
  return out;
}

std::string FoldPlan::to_json() const {
  nlohmann::json j;
  j["seed"] = seed;
  j["n_records"] = n_records;
  j["folds"] = nlohmann::json::array();
  for (const auto& f : folds) j["folds"].push_back(f);
  return j.dump();
}

FoldPlan FoldPlan::from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    FoldPlan plan;
    plan.seed = j.at("seed").get<std::uint64_t>();
    plan.n_records = j.at("n_records").get<std::size_t>();
    const auto& folds = j.at("folds");
    if (folds.size() != kFoldCount) throw Error(ErrorCode::InvalidArgument, "fold plan must hold 5 folds");
    for (std::size_t i = 0; i < kFoldCount; ++i) plan.folds[i] = folds[i].get<std::vector<std::size_t>>();
    return plan;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("fold plan: ") + e.what());
  }
}

FoldPlan make_folds(std::size_t n_records, std::uint64_t seed) {
  if (n_records < kFoldCount)
    throw Error(ErrorCode::TooFewRecords, "need at least 5 records, got " + std::to_string(n_records));
  std::vector<std::size_t> order(n_records);
  for (std::size_t i = 0; i < n_records; ++i) order[i] = i;
  // Fisher-Yates with explicit modulo draws, so plans do not depend on the
  // standard library's distribution implementation.
  std::mt19937_64 rng(seed);
  for (std::size_t i = n_records - 1; i > 0; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % (i + 1));
    std::swap(order[i], order[j]);
  }
  FoldPlan plan;
  plan.seed = seed;
  plan.n_records = n_records;
  for (std::size_t i = 0; i < n_records; ++i) plan.folds[i % kFoldCount].push_back(order[i]);
  for (auto& f : plan.folds) std::sort(f.begin(), f.end());
  return plan;
}

MeanSd mean_sd(const std::vector<double>& values, SdKind kind) {
  MeanSd out;
  out.n = values.size();
  if (values.empty()) return out;
  double sum = 0.0;
  for (double v : values) sum += v;
  out.mean = sum / static_cast<double>(values.size());
  if (values.size() == 1) return out;
  double ss = 0.0;
  for (double v : values) ss += (v - out.mean) * (v - out.mean);
  const double denom = kind == SdKind::Sample ? static_cast<double>(values.size() - 1) : static_cast<double>(values.size());
  out.sd = std::sqrt(ss / denom);
  return out;
}

std::string format_mean_sd(const MeanSd& m, int decimals) {
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(decimals);
  s << m.mean << " (" << m.sd << ")";
  return s.str();
}

FoldAggregate aggregate_folds(const std::vector<FoldMetrics>& per_fold, SdKind kind) {
  if (per_fold.empty()) throw Error(ErrorCode::InvalidArgument, "aggregate_folds needs at least one fold");
  std::map<std::string, std::vector<double>> columns;
  for (const auto& fold : per_fold)
    for (const auto& [name, value] : fold) columns[name].push_back(value);
  FoldAggregate agg;
  agg.sd_kind = kind;
  for (const auto& [name, values] : columns) agg.metrics[name] = mean_sd(values, kind);
  return agg;
}

std::string FoldAggregate::to_json() const {
  nlohmann::json j;
  j["sd"] = sd_kind == SdKind::Sample ? "sample" : "population";
  for (const auto& [name, m] : metrics) j["metrics"][name] = {{"mean", m.mean}, {"sd", m.sd}, {"n", m.n}};
  return j.dump();
}

std::string FoldAggregate::to_table(int decimals) const {
  std::vector<std::string> heads, cells;
  for (const auto& [name, m] : metrics) {
    heads.push_back(name);
    cells.push_back(format_mean_sd(m, decimals));
  }
  std::ostringstream s;
  auto row = [&](const std::vector<std::string>& items) {
    for (std::size_t i = 0; i < items.size(); ++i) {
      const std::size_t w = std::max(heads[i].size(), cells[i].size());
      s << (i ? "  " : "") << items[i] << std::string(w - items[i].size(), ' ');
    }
    s << '\n';
  };
  row(heads);
  row(cells);
  return s.str();
}

}  // namespace airad
