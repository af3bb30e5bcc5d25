#include <algorithm>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "airad/cascade.hpp"
#include "airad/job.hpp"
#include "airad/metrics.hpp"
#include "airad/nifti.hpp"
#include "airad/phantom.hpp"
#include "airad/records.hpp"
#include "airad/train_utils.hpp"
#include "airad/unet.hpp"
#include "server.hpp"

namespace fs = std::filesystem;
using namespace airad;

namespace {

std::string read_text(const fs::path& p) {
  std::ifstream f(p);
  if (!f) throw Error(ErrorCode::IoFailure, "cannot open " + p.string());
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

struct SegmentArgs {
  std::vector<std::string> inputs;
  std::string liver, tumor, vessel;
  float threshold = 0.5f;
  std::string out;
  bool no_restore_native = false;
  bool lcc = false;
  bool sequential = false;
  std::string config;
  std::string stats;
  double rescale = -1.0;
  bool quiet = false;
};

int run_segment(const SegmentArgs& a) {
  JobRequest req;
  if (!a.config.empty()) req.config = CascadeConfig::from_json(read_text(a.config));
  req.config.liver_model = ModelBinding::from_file(a.liver);
  req.config.tumor_model = ModelBinding::from_file(a.tumor);
  req.config.vessel_model = ModelBinding::from_file(a.vessel);
  req.config.threshold = a.threshold;
  if (a.no_restore_native) req.config.restore_native = false;
  if (a.lcc) req.config.lcc_filter = true;
  if (a.sequential) req.config.parallel = false;
  if (a.rescale > 0) req.config.preprocess.rescale_factor = a.rescale;
  if (!a.stats.empty()) req.config.stats = load_stats(a.stats);
  req.config.validate();
  for (const auto& in : a.inputs) req.volumes.emplace_back(in);
  req.out_dir = a.out.empty() ? out_dir_from_env("airad_out") : fs::path(a.out);

  Job job(new_job_id(), req);
  std::jthread reporter;
  if (!a.quiet) {
    reporter = std::jthread([&job](std::stop_token st) {
      std::uint64_t seen = 0;
      while (true) {
        job.wait_for_events(seen, std::chrono::milliseconds(200));
        for (const auto& e : job.events_after(seen)) {
          seen = e.seq;
          if (!e.volume) continue;
          const auto& v = job.request().volumes[*e.volume];
          std::cerr << "[" << v.filename().string() << "] " << to_string(e.phase) << ' ' << static_cast<int>(e.percent)
                    << '%' << (e.message.empty() ? "" : " " + e.message) << '\n';
        }
        if (job.finished() && job.events_after(seen).empty()) return;
        if (st.stop_requested() && job.finished()) return;
      }
    });
  }
  const bool ok = run_job(job);
  if (reporter.joinable()) reporter.join();
  for (const auto& v : job.volumes()) {
    if (v.error)
      std::cout << v.input.string() << ": failed: " << *v.error << '\n';
    else
      std::cout << v.input.string() << ": wrote " << (req.out_dir / v.stem).string() << '\n';
  }
  return ok ? 0 : 1;
}

int run_inspect(const std::vector<std::string>& paths, bool as_json) {
  std::vector<fs::path> ps(paths.begin(), paths.end());
  const auto rows = inspect_records(ps);
  if (as_json) {
    std::cout << to_json(rows) << '\n';
  } else {
    for (const auto& r : rows) {
      if (!r.metadata) {
        std::cout << r.path.string() << "  error: " << r.error << '\n';
        continue;
      }
      const auto& m = *r.metadata;
      std::cout << r.path.string() << "  " << m.dims.nx << 'x' << m.dims.ny << 'x' << m.dims.nz << "  spacing "
                << m.spacing[0] << ' ' << m.spacing[1] << ' ' << m.spacing[2] << " mm  slices " << m.slice_count << "  "
                << m.datatype << "  " << m.file_size << " bytes\n";
    }
  }
  return std::all_of(rows.begin(), rows.end(), [](const RecordEntry& r) { return r.metadata.has_value(); }) ? 0 : 1;
}

int run_phantom(const std::string& spec_path, std::size_t size, std::uint64_t seed, const std::string& out,
                const std::string& name, float noise, bool write_oracles) {
  PhantomSpec spec = spec_path.empty() ? default_phantom_spec(size) : PhantomSpec::from_json(read_text(spec_path));
  if (noise >= 0) spec.noise = noise;
  const Phantom p = generate_phantom(spec, seed, name);
  const fs::path dir(out);
  fs::create_directories(dir / "gt");
  write_nifti(p.volume, dir / (name + ".nii.gz"), true);
  write_nifti(p.truth, dir / "gt" / (name + ".nii.gz"), true);
  if (write_oracles) {
    const auto o = oracle_bindings(spec);
    std::ofstream(dir / "liver_oracle.json") << o.liver.to_json_text() << '\n';
    std::ofstream(dir / "tumor_oracle.json") << o.tumor.to_json_text() << '\n';
    std::ofstream(dir / "vessel_oracle.json") << o.vessel.to_json_text() << '\n';
  }
  std::cout << (dir / (name + ".nii.gz")).string() << '\n';
  return 0;
}

int run_evaluate(const std::string& pred_root, const std::string& gt_dir, bool as_json) {
  nlohmann::json all = nlohmann::json::object();
  std::map<std::string, std::vector<FoldMetrics>> per_tissue;
  std::vector<fs::path> gts;
  for (const auto& e : fs::directory_iterator(gt_dir))
    if (e.is_regular_file() && (e.path().extension() == ".gz" || e.path().extension() == ".nii")) gts.push_back(e.path());
  std::sort(gts.begin(), gts.end());
  int status = 0;
  for (const auto& g : gts) {
    const std::string stem = nifti_stem(g);
    const fs::path dir = fs::path(pred_root) / stem;
    if (!fs::exists(dir / kBundleFiles[0])) {
      std::cerr << stem << ": no prediction under " << dir.string() << '\n';
      status = 1;
      continue;
    }
    const LabelMask gt = read_nifti_mask(g);
    const LabelMask pred = merge_labels(read_nifti_mask(dir / kBundleFiles[0]), read_nifti_mask(dir / kBundleFiles[1]),
                                        read_nifti_mask(dir / kBundleFiles[2]));
    const auto reports = evaluate(pred, gt);
    all[stem] = nlohmann::json::parse(report_to_json(reports));
    for (const auto& r : reports) {
      FoldMetrics m{{"dice", r.metrics.dice * 100.0}, {"iou", r.metrics.iou * 100.0}};
      if (r.metrics.asd_mm) m["asd_mm"] = *r.metrics.asd_mm;
      if (r.metrics.hd95_mm) m["hd95_mm"] = *r.metrics.hd95_mm;
      per_tissue[r.tissue].push_back(m);
    }
    if (!as_json) std::cout << stem << '\n' << report_to_table(reports) << '\n';
  }
  if (as_json) {
    std::cout << all.dump(2) << '\n';
  } else if (gts.size() > 1) {
    for (const auto& [tissue, rows] : per_tissue)
      std::cout << tissue << " over " << rows.size() << " cases\n" << aggregate_folds(rows).to_table() << '\n';
  }
  return status;
}

service::Server* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->stop();
}

int run_serve(const std::string& bind, const std::string& static_dir, bool allow_remote, const std::string& out,
              std::size_t workers) {
  service::ServerOptions opt;
  opt.bind = service::parse_bind_address(bind);
  opt.allow_remote = allow_remote;
  if (!static_dir.empty()) opt.static_dir = static_dir;
  opt.out_dir = out.empty() ? out_dir_from_env("airad_out") : fs::path(out);
  opt.workers = workers ? workers : workers_from_env();
  service::Server server(opt);
  const int port = server.bind();
  std::cerr << "listening on " << opt.bind.host << ':' << port << " (" << server.jobs().worker_count()
            << " workers, outputs under " << opt.out_dir.string() << ")\n";
  g_server = &server;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  server.listen();
  g_server = nullptr;
  return 0;
}

int run_make_weights(const std::string& out, const std::vector<std::size_t>& channels, std::size_t in_channels,
                     std::uint64_t seed, const std::string& upsample) {
  UNetConfig cfg;
  cfg.levels = channels.size();
  cfg.channels_per_level = channels;
  cfg.in_channels = in_channels;
  if (upsample == "bilinear") cfg.upsample_mode = UpsampleMode::BilinearThenConv;
  cfg.validate();
  const WeightStore w = WeightStore::random(cfg, seed);
  w.save(out);
  std::cout << out << ": " << param_count(cfg).total << " parameters, config " << w.config_hash() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Liver, tumor and vessel segmentation of CT volumes"};
  app.require_subcommand(1);

  SegmentArgs seg;
  auto* segment = app.add_subcommand("segment", "Run the cascade and write masks and meshes per volume");
  segment->add_option("--input", seg.inputs, "NIfTI volumes")->required();
  segment->add_option("--liver-model", seg.liver, "Weight file or threshold spec")->required();
  segment->add_option("--tumor-model", seg.tumor, "Weight file or threshold spec")->required();
  segment->add_option("--vessel-model", seg.vessel, "Weight file or threshold spec")->required();
  segment->add_option("--threshold", seg.threshold, "Probability threshold")->capture_default_str();
  segment->add_option("--out", seg.out, "Output root (default $AIRAD_OUT_DIR or ./airad_out)");
  segment->add_flag("--no-restore-native", seg.no_restore_native, "Keep masks on the working grid");
  segment->add_flag("--lcc", seg.lcc, "Keep only the largest liver component");
  segment->add_flag("--sequential", seg.sequential, "Run tumor and vessel phases one after another");
  segment->add_option("--config", seg.config, "Cascade config JSON");
  segment->add_option("--stats", seg.stats, "Normalization statistics JSON");
  segment->add_option("--rescale", seg.rescale, "In-plane rescale factor");
  segment->add_flag("--quiet", seg.quiet, "No progress output");

  std::vector<std::string> inspect_paths;
  bool inspect_json = false;
  auto* inspect = app.add_subcommand("inspect", "Print header metadata of NIfTI records");
  inspect->add_option("paths", inspect_paths, "NIfTI files")->required();
  inspect->add_flag("--json", inspect_json);

  std::string spec_path, phantom_out, phantom_name = "phantom";
  std::size_t phantom_size = 64;
  std::uint64_t phantom_seed = 0;
  float phantom_noise = -1.0f;
  bool phantom_oracles = false;
  auto* phantom = app.add_subcommand("phantom", "Generate a synthetic volume with ground truth");
  phantom->add_option("--spec", spec_path, "Phantom spec JSON (default: built-in)");
  phantom->add_option("--size", phantom_size, "Grid size of the built-in spec")->capture_default_str();
  phantom->add_option("--seed", phantom_seed)->capture_default_str();
  phantom->add_option("--out", phantom_out)->required();
  phantom->add_option("--name", phantom_name)->capture_default_str();
  phantom->add_option("--noise", phantom_noise, "Override the noise amplitude");
  phantom->add_flag("--oracles", phantom_oracles, "Also write threshold model specs matching the bands");

  std::string pred_root, gt_dir;
  bool eval_json = false;
  auto* eval = app.add_subcommand("evaluate", "Score predicted bundles against ground-truth label maps");
  eval->add_option("--pred", pred_root, "Output root holding <stem>/ folders")->required();
  eval->add_option("--gt", gt_dir, "Directory of <stem>.nii.gz label maps")->required();
  eval->add_flag("--json", eval_json);

  std::string bind = "127.0.0.1:8080", static_dir, serve_out;
  bool allow_remote = false;
  std::size_t workers = 0;
  auto* serve = app.add_subcommand("serve", "Run the HTTP job service");
  serve->add_option("--bind", bind)->capture_default_str();
  serve->add_option("--static", static_dir, "Directory served at /");
  serve->add_flag("--allow-remote", allow_remote, "Permit binding a non-loopback address");
  serve->add_option("--out", serve_out, "Output root (default $AIRAD_OUT_DIR or ./airad_out)");
  serve->add_option("--workers", workers, "Worker threads (default $AIRAD_WORKERS or 1)");

  std::string weights_out, upsample = "transposed";
  std::vector<std::size_t> channels{64, 128, 256, 512, 512};
  std::size_t in_channels = 5;
  std::uint64_t weight_seed = 0;
  auto* weights = app.add_subcommand("make-weights", "Write a randomly initialised weight file");
  weights->add_option("--out", weights_out)->required();
  weights->add_option("--channels", channels, "Channels per level")->delimiter(',')->capture_default_str();
  weights->add_option("--in-channels", in_channels)->capture_default_str();
  weights->add_option("--seed", weight_seed)->capture_default_str();
  weights->add_option("--upsample", upsample)->check(CLI::IsMember({"transposed", "bilinear"}))->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*segment) return run_segment(seg);
    if (*inspect) return run_inspect(inspect_paths, inspect_json);
    if (*phantom)
      return run_phantom(spec_path, phantom_size, phantom_seed, phantom_out, phantom_name, phantom_noise, phantom_oracles);
    if (*eval) return run_evaluate(pred_root, gt_dir, eval_json);
    if (*serve) return run_serve(bind, static_dir, allow_remote, serve_out, workers);
    if (*weights) return run_make_weights(weights_out, channels, in_channels, weight_seed, upsample);
  } catch (const Error& e) {
    std::cerr << "error [" << to_string(e.code()) << "]: " << e.message() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
