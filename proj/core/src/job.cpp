#include "airad/job.hpp"

#include <algorithm>
#include <cstdlib>
#include <future>
#include <random>

#include <nlohmann/json.hpp>

#include "airad/nifti.hpp"

namespace airad {
namespace {

double clamp_percent(double p) { return std::clamp(p, 0.0, 100.0); }

double fraction(std::size_t done, std::size_t total) {
  return total ? static_cast<double>(std::min(done, total)) / static_cast<double>(total) : 1.0;
}

nlohmann::json volume_json(const VolumeStatus& v) {
  nlohmann::json j = {{"input", v.input.string()},
                      {"stem", v.stem},
                      {"phase", to_string(v.phase)},
                      {"percent", v.percent},
                      {"outputs", v.outputs},
                      {"timings", v.timings}};
  j["error"] = v.error ? nlohmann::json(*v.error) : nlohmann::json();
  return j;
}

}  // namespace

const char* to_string(JobPhase p) noexcept {
  switch (p) {
    case JobPhase::Queued: return "queued";
    case JobPhase::Preprocessing: return "preprocessing";
    case JobPhase::Liver: return "liver";
    case JobPhase::Tumors: return "tumors";
    case JobPhase::Vessels: return "vessels";
    case JobPhase::Reconstructing: return "reconstructing";
    case JobPhase::Writing: return "writing";
    case JobPhase::Done: return "done";
    case JobPhase::Failed: return "failed";
  }
  return "unknown";
}

const char* to_string(JobState s) noexcept {
  switch (s) {
    case JobState::Queued: return "queued";
    case JobState::Running: return "running";
    case JobState::Done: return "done";
    case JobState::Failed: return "failed";
  }
  return "unknown";
}

std::string ProgressEvent::to_json() const {
  nlohmann::json j = {{"seq", seq}, {"phase", to_string(phase)}, {"percent", percent}, {"message", message}};
  j["volume"] = volume ? nlohmann::json(*volume) : nlohmann::json();
  return j.dump();
}

Job::Job(std::string id, JobRequest request) : id_(std::move(id)), request_(std::move(request)) {
  for (const auto& p : request_.volumes) {
    VolumeStatus v;
    v.input = p;
    v.stem = nifti_stem(p);
    volumes_.push_back(std::move(v));
  }
}

JobState Job::state() const {
  std::lock_guard lock(mutex_);
  return state_;
}

std::vector<VolumeStatus> Job::volumes() const {
  std::lock_guard lock(mutex_);
  return volumes_;
}

bool Job::finished() const {
  std::lock_guard lock(mutex_);
  return state_ == JobState::Done || state_ == JobState::Failed;
}

std::string Job::to_json() const {
  std::lock_guard lock(mutex_);
  nlohmann::json j = {{"id", id_}, {"phase", to_string(state_)}, {"out_dir", request_.out_dir.string()}};
  j["volumes"] = nlohmann::json::array();
  for (const auto& v : volumes_) j["volumes"].push_back(volume_json(v));
  j["last_event"] = events_.empty() ? 0 : events_.back().seq;
  return j.dump();
}

std::vector<ProgressEvent> Job::events_after(std::uint64_t seq) const {
  std::lock_guard lock(mutex_);
  std::vector<ProgressEvent> out;
  // seq numbers are 1-based positions in events_.
  for (std::size_t i = static_cast<std::size_t>(std::min<std::uint64_t>(seq, events_.size())); i < events_.size(); ++i)
    out.push_back(events_[i]);
  return out;
}

void Job::wait_for_events(std::uint64_t seq, std::chrono::milliseconds timeout) const {
  std::unique_lock lock(mutex_);
  changed_.wait_for(lock, timeout, [&] {
    return events_.size() > seq || state_ == JobState::Done || state_ == JobState::Failed;
  });
}

void Job::push_event(std::optional<std::size_t> volume, JobPhase phase, double percent, std::string message) {
  ProgressEvent e;
  e.seq = events_.size() + 1;
  e.volume = volume;
  e.phase = phase;
  e.percent = percent;
  e.message = std::move(message);
  events_.push_back(std::move(e));
  changed_.notify_all();
}

void Job::start() {
  std::lock_guard lock(mutex_);
  state_ = JobState::Running;
}

void Job::update(std::size_t volume, JobPhase phase, double percent, std::string message) {
  std::lock_guard lock(mutex_);
  VolumeStatus& v = volumes_.at(volume);
  if (v.phase == JobPhase::Failed || v.phase == JobPhase::Done) return;
  const JobPhase next_phase = std::max(v.phase, phase);
  const double next_percent = std::max(v.percent, clamp_percent(percent));
  if (next_phase == v.phase && next_percent == v.percent && message.empty()) return;
  v.phase = next_phase;
  v.percent = next_percent;
  push_event(volume, v.phase, v.percent, std::move(message));
}

void Job::fail(std::size_t volume, const std::string& error) {
  std::lock_guard lock(mutex_);
  VolumeStatus& v = volumes_.at(volume);
  v.phase = JobPhase::Failed;
  v.error = error;
  push_event(volume, v.phase, v.percent, error);
}

void Job::set_result(std::size_t volume, std::vector<std::string> outputs, std::map<std::string, double> timings) {
  std::lock_guard lock(mutex_);
  volumes_.at(volume).outputs = std::move(outputs);
  volumes_.at(volume).timings = std::move(timings);
}

void Job::finish() {
  std::lock_guard lock(mutex_);
  const bool ok = std::all_of(volumes_.begin(), volumes_.end(), [](const VolumeStatus& v) { return v.phase == JobPhase::Done; });
  state_ = ok ? JobState::Done : JobState::Failed;
  push_event(std::nullopt, ok ? JobPhase::Done : JobPhase::Failed, 100.0, ok ? "job finished" : "job finished with failures");
}

SceneDocument build_scene(const CascadeResult& result) {
  const std::pair<const LabelMask*, const char*> tissues[] = {
      {&result.liver, "liver"}, {&result.tumors, "tumor"}, {&result.vessels, "vessel"}};
  std::vector<std::future<TissueMesh>> pending;
  for (const auto& [mask, name] : tissues) {
    if (count_nonzero(*mask) == 0) continue;
    pending.push_back(std::async(std::launch::async, [mask = mask, name = name] {
      TissueMesh m = assign_texcoords(marching_cubes(*mask));
      m.material = name;
      return m;
    }));
  }
  std::vector<TissueMesh> meshes;
  for (auto& f : pending) meshes.push_back(f.get());
  if (meshes.empty()) {
    SceneDocument doc;
    doc.materials = default_materials();
    return doc;
  }
  return merge_scene(meshes);
}

std::vector<std::string> write_output_bundle(const CascadeResult& result, const SceneDocument& scene,
                                             const std::filesystem::path& dir,
                                             const std::function<void(std::size_t, std::size_t)>& progress) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::IoFailure, "cannot create " + dir.string() + ": " + ec.message());
  const std::size_t total = std::size(kBundleFiles);
  auto step = [&](std::size_t done) {
    if (progress) progress(done, total);
  };
  write_nifti(result.liver, dir / kBundleFiles[0], true);
  step(1);
  write_nifti(result.tumors, dir / kBundleFiles[1], true);
  step(2);
  write_nifti(result.vessels, dir / kBundleFiles[2], true);
  step(3);
  write_obj_mtl(scene, dir / kBundleFiles[3], dir / kBundleFiles[4]);
  step(5);
  return {std::begin(kBundleFiles), std::end(kBundleFiles)};
}

bool run_job(Job& job) {
  job.start();
  CascadeModels models;
  try {
    job.request().config.validate();
    models = CascadeModels::load(job.request().config);
  } catch (const std::exception& e) {
    for (std::size_t i = 0; i < job.request().volumes.size(); ++i) job.fail(i, e.what());
    job.finish();
    return false;
  }
  return run_job(job, models);
}

bool run_job(Job& job, const CascadeModels& models) {
  job.start();
  const JobRequest& req = job.request();
  bool all_ok = true;
  for (std::size_t i = 0; i < req.volumes.size(); ++i) {
    try {
      job.update(i, JobPhase::Preprocessing, 0.0, "reading " + req.volumes[i].filename().string());
      const Volume volume = read_nifti(req.volumes[i]);
      std::size_t tumor_done = 0, tumor_total = 0, vessel_done = 0, vessel_total = 0;
      auto on_progress = [&](CascadePhase phase, std::size_t done, std::size_t total) {
        switch (phase) {
          case CascadePhase::Preprocessing:
            job.update(i, JobPhase::Preprocessing, 10.0 * fraction(done, total));
            break;
          case CascadePhase::Liver:
            job.update(i, JobPhase::Liver, 10.0 + 30.0 * fraction(done, total));
            break;
          case CascadePhase::Tumors:
          case CascadePhase::Vessels: {
            if (phase == CascadePhase::Tumors) {
              tumor_done = done;
              tumor_total = total;
            } else {
              vessel_done = done;
              vessel_total = total;
            }
            const double f = 0.5 * (tumor_total ? fraction(tumor_done, tumor_total) : 0.0) +
                             0.5 * (vessel_total ? fraction(vessel_done, vessel_total) : 0.0);
            const bool tumors_finished = tumor_total && tumor_done >= tumor_total;
            job.update(i, tumors_finished ? JobPhase::Vessels : JobPhase::Tumors, 40.0 + 40.0 * f);
            break;
          }
          case CascadePhase::Merging:
            job.update(i, JobPhase::Vessels, 80.0);
            break;
        }
      };
      CascadeResult result = run_cascade(volume, req.config, models, on_progress);
      job.update(i, JobPhase::Reconstructing, 80.0, "building surface meshes");
      const SceneDocument scene = build_scene(result);
      job.update(i, JobPhase::Writing, 90.0, "writing outputs");
      const auto files = write_output_bundle(result, scene, req.out_dir / job.volumes()[i].stem,
                                             [&](std::size_t done, std::size_t total) {
                                               job.update(i, JobPhase::Writing, 90.0 + 9.0 * fraction(done, total));
                                             });
      job.set_result(i, files, result.timings);
      job.update(i, JobPhase::Done, 100.0, "done");
    } catch (const std::exception& e) {
      all_ok = false;
      job.fail(i, e.what());
    }
  }
  job.finish();
  return all_ok;
}

std::string new_job_id() {
  static std::mutex m;
  static std::mt19937_64 rng{std::random_device{}()};
  std::lock_guard lock(m);
  static constexpr char kHex[] = "0123456789abcdef";
  std::string id(16, '0');
  std::uint64_t bits = rng();
  for (char& c : id) {
    c = kHex[bits & 15];
    bits >>= 4;
  }
  return id;
}

JobManager::JobManager(std::size_t workers) {
  workers = std::max<std::size_t>(workers, 1);
  for (std::size_t i = 0; i < workers; ++i) workers_.emplace_back([this](std::stop_token st) { work(st); });
}

JobManager::~JobManager() {
  for (auto& w : workers_) w.request_stop();
  ready_.notify_all();
}

std::shared_ptr<Job> JobManager::submit(JobRequest request) {
  auto job = std::make_shared<Job>(new_job_id(), std::move(request));
  {
    std::lock_guard lock(mutex_);
    jobs_[job->id()] = job;
    queue_.push_back(job);
  }
  ready_.notify_one();
  return job;
}

std::shared_ptr<Job> JobManager::find(const std::string& id) const {
  std::lock_guard lock(mutex_);
  const auto it = jobs_.find(id);
  return it == jobs_.end() ? nullptr : it->second;
}

void JobManager::work(std::stop_token stop) {
  while (true) {
    std::shared_ptr<Job> job;
    {
      std::unique_lock lock(mutex_);
      if (!ready_.wait(lock, stop, [&] { return !queue_.empty(); })) return;
      job = std::move(queue_.front());
      queue_.pop_front();
    }
    run_job(*job);
  }
}

std::size_t workers_from_env() {
  if (const char* s = std::getenv("AIRAD_WORKERS")) {
    try {
      const long n = std::stol(s);
      if (n > 0) return static_cast<std::size_t>(n);
    } catch (const std::exception&) {
    }
  }
  return 1;
}

std::filesystem::path out_dir_from_env(const std::filesystem::path& fallback) {
  if (const char* s = std::getenv("AIRAD_OUT_DIR"); s && *s) return s;
  return fallback;
}

}  // namespace airad
