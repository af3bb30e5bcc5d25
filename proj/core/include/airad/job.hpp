#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "airad/cascade.hpp"
#include "airad/mesh.hpp"

namespace airad {

/// Per-volume pipeline position; values only move forward.
enum class JobPhase { Queued, Preprocessing, Liver, Tumors, Vessels, Reconstructing, Writing, Done, Failed };
const char* to_string(JobPhase p) noexcept;

enum class JobState { Queued, Running, Done, Failed };
const char* to_string(JobState s) noexcept;

/// The five files written per volume, in write order.
inline constexpr const char* kBundleFiles[] = {"liver.nii.gz", "tumors.nii.gz", "vessels.nii.gz", "complete_model.obj",
                                               "complete_model.mtl"};

struct ProgressEvent {
  std::uint64_t seq = 0;
  /// Empty for the terminal job-level event.
  std::optional<std::size_t> volume;
  JobPhase phase = JobPhase::Queued;
  double percent = 0.0;
  std::string message;

  std::string to_json() const;
};

struct VolumeStatus {
  std::filesystem::path input;
  std::string stem;
  JobPhase phase = JobPhase::Queued;
  double percent = 0.0;
  std::optional<std::string> error;
  std::vector<std::string> outputs;
  std::map<std::string, double> timings;
};

struct JobRequest {
  std::vector<std::filesystem::path> volumes;
  CascadeConfig config;
  std::filesystem::path out_dir = ".";
};

/// Shared job record: one writer (the runner), many readers.
class Job {
 public:
  Job(std::string id, JobRequest request);

  const std::string& id() const noexcept { return id_; }
  const JobRequest& request() const noexcept { return request_; }

  JobState state() const;
  std::vector<VolumeStatus> volumes() const;
  bool finished() const;
  std::string to_json() const;

  std::vector<ProgressEvent> events_after(std::uint64_t seq) const;
  /// Blocks until an event newer than `seq` exists, the job finishes, or the timeout passes.
  void wait_for_events(std::uint64_t seq, std::chrono::milliseconds timeout) const;

  void start();
  /// Clamps to monotone phase and percent; emits an event when either changes.
  void update(std::size_t volume, JobPhase phase, double percent, std::string message = {});
  void fail(std::size_t volume, const std::string& error);
  void set_result(std::size_t volume, std::vector<std::string> outputs, std::map<std::string, double> timings);
  void finish();

 private:
  void push_event(std::optional<std::size_t> volume, JobPhase phase, double percent, std::string message);

  std::string id_;
  JobRequest request_;
  mutable std::mutex mutex_;
  mutable std::condition_variable changed_;
  JobState state_ = JobState::Queued;
  std::vector<VolumeStatus> volumes_;
  std::vector<ProgressEvent> events_;
};

/// Liver, tumor and vessel meshes of the non-empty masks, merged in that order.
SceneDocument build_scene(const CascadeResult& result);

/// Writes the five bundle files into `dir` (created if needed). Returns file names.
std::vector<std::string> write_output_bundle(const CascadeResult& result, const SceneDocument& scene,
                                             const std::filesystem::path& dir,
                                             const std::function<void(std::size_t done, std::size_t total)>& progress = {});

/// Processes each volume in order. Per-volume failures do not stop the job.
/// Returns true when every volume succeeded.
bool run_job(Job& job);
bool run_job(Job& job, const CascadeModels& models);

std::string new_job_id();

/// Fixed-size worker pool executing submitted jobs in FIFO order.
class JobManager {
 public:
  explicit JobManager(std::size_t workers);
  ~JobManager();
  JobManager(const JobManager&) = delete;
  JobManager& operator=(const JobManager&) = delete;

  std::shared_ptr<Job> submit(JobRequest request);
  std::shared_ptr<Job> find(const std::string& id) const;
  std::size_t worker_count() const noexcept { return workers_.size(); }

 private:
  void work(std::stop_token stop);

  mutable std::mutex mutex_;
  std::condition_variable_any ready_;
  std::deque<std::shared_ptr<Job>> queue_;
  std::map<std::string, std::shared_ptr<Job>> jobs_;
  std::vector<std::jthread> workers_;
};

/// AIRAD_WORKERS, else 1.
std::size_t workers_from_env();
/// AIRAD_OUT_DIR, else `fallback`.
std::filesystem::path out_dir_from_env(const std::filesystem::path& fallback);

}  // namespace airad
