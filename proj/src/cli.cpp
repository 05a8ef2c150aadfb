#include "cvos/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "cvos/config.hpp"

#ifndef CVOS_VERSION
#define CVOS_VERSION "0.0.0"
#endif
#ifndef CVOS_GIT
#define CVOS_GIT "unknown"
#endif

namespace cvos {

namespace fs = std::filesystem;

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

// Shared state of one invocation.
struct Run {
  std::string command;
  std::vector<std::string> args;
  RunConfig cfg;
  fs::path out;
  fs::path data;
  fs::path ckpt;
  std::string split;
  RunManifest manifest;
  std::ostream* log = nullptr;

  void begin() {
    fs::create_directories(out);
    manifest.command = command;
    manifest.argv = args;
    manifest.config_snapshot = serialize_config(cfg);
    manifest.config_hash = config_hash(cfg);
    manifest.seed = cfg.seed;
    manifest.version = version_stamp();
    {
      std::ofstream snap(out / "config.txt", std::ios::binary);
      snap << manifest.config_snapshot;
      if (!snap) throw std::runtime_error("cannot write " + (out / "config.txt").string());
    }
    manifest.outputs.push_back("config.txt");
    manifest.write(out);
  }

  std::ofstream open(const std::string& rel) {
    const fs::path p = out / rel;
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream f(p, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + p.string());
    manifest.outputs.push_back(rel);
    return f;
  }

  std::vector<VideoClip> dataset(const std::string& fallback_split) const {
    const std::string which = split.empty() ? fallback_split : split;
    if (data.empty()) {
      auto all = gen_synthetic(cfg.synth);
      const auto cut = all.begin() + (static_cast<std::ptrdiff_t>(all.size()) - cfg.n_val);
      if (which == "train") return {all.begin(), cut};
      if (which == "val") return {cut, all.end()};
      if (which == "all") return all;
      throw UsageError("unknown split '" + which + "' for generated data (train, val or all)");
    }
    std::vector<VideoClip> clips;
    for (const std::string& name : read_split(data, which)) {
      clips.push_back(load_davis_clip(data, name, WorkingResolution{cfg.height, cfg.width}));
    }
    if (clips.empty()) throw std::runtime_error("split '" + which + "' of " + data.string() + " is empty");
    return clips;
  }

  LoadedCheckpoint model(const fs::path& dir, const char* flag = "--ckpt") const {
    if (dir.empty()) throw UsageError(std::string(command) + " needs " + flag);
    LoadedCheckpoint ck = load_checkpoint(dir);
    if (!(ck.model.hyper() == cfg.hyper)) {
      throw std::runtime_error("checkpoint " + dir.string() + " was trained with different network widths");
    }
    return ck;
  }
};

std::vector<SequenceScore> score_all(const SegModel& model, const std::vector<VideoClip>& clips,
                                     const InferenceConfig& ic, long long* evals = nullptr) {
  std::vector<SequenceScore> all;
  for (const VideoClip& v : clips) {
    if (!v.gt.front()) throw std::runtime_error(v.name + ": first frame has no annotation");
    InferenceResult r = run_inference(model, v, *v.gt.front(), ic);
    if (evals) *evals += r.net_evaluations;
    auto s = score_sequence(v, r.masks);
    all.insert(all.end(), s.begin(), s.end());
  }
  return all;
}

void write_scores(std::ostream& os, const std::vector<SequenceScore>& scores) {
  os << "video,object,J,F,JF,frames\n";
  for (const SequenceScore& s : scores) {
    os << s.video << ',' << s.object_id << ',' << fmt(s.j) << ',' << fmt(s.f) << ',' << fmt(0.5 * (s.j + s.f))
       << ',' << s.frames << '\n';
  }
  const JFReport m = summarize(scores);
  os << "mean,," << fmt(m.j) << ',' << fmt(m.f) << ',' << fmt(m.jf) << ",\n";
}

void cmd_synth(Run& run) {
  const auto clips = gen_synthetic(run.cfg.synth);
  const std::size_t n_train = clips.size() - static_cast<std::size_t>(run.cfg.n_val);
  std::vector<std::string> train, val;
  auto csv = run.open("synth.csv");
  csv << "video,split,frames,objects\n";
  for (std::size_t i = 0; i < clips.size(); ++i) {
    save_davis_clip(run.out, clips[i]);
    (i < n_train ? train : val).push_back(clips[i].name);
    csv << clips[i].name << ',' << (i < n_train ? "train" : "val") << ',' << clips[i].length() << ','
        << clips[i].object_ids.size() << '\n';
  }
  write_split(run.out, "train", train);
  write_split(run.out, "val", val);
  run.manifest.outputs.insert(run.manifest.outputs.end(), {"JPEGImages", "Annotations", "ImageSets"});
  *run.log << "wrote " << clips.size() << " videos to " << run.out.string() << "\n";
}

void cmd_train(Run& run) {
  const auto clips = run.dataset("train");
  TrainHooks hooks;
  hooks.config_hash = run.manifest.config_hash;
  if (run.cfg.train.checkpoint_every > 0) hooks.checkpoint_dir = run.out;
  hooks.on_epoch = [&](const EpochRecord& r) {
    *run.log << "epoch " << r.epoch << " loss " << fmt(r.loss) << "\n";
  };
  TrainResult res = train(SegModel(run.cfg.hyper, run.cfg.seed), clips, run.cfg.train, run.cfg.loss, hooks);
  save_checkpoint(res.model, {run.cfg.train.epochs, run.cfg.seed, run.manifest.config_hash}, run.out);
  run.manifest.outputs.push_back("manifest.txt");
  auto csv = run.open("loss_history.csv");
  csv << "epoch,loss,forward,cycle,clips\n";
  for (const EpochRecord& r : res.history) {
    csv << r.epoch << ',' << fmt(r.loss) << ',' << fmt(r.forward) << ',' << fmt(r.cycle) << ',' << r.clips << '\n';
  }
}

void cmd_infer(Run& run) {
  const auto ck = run.model(run.ckpt);
  const auto clips = run.dataset("val");
  auto csv = run.open("corrections.csv");
  csv << "video,object,frame,objective_start,objective_end,steps,stopped_early\n";
  for (const VideoClip& v : clips) {
    if (!v.gt.front()) throw std::runtime_error(v.name + ": first frame has no annotation");
    InferenceResult r = run_inference(ck.model, v, *v.gt.front(), run.cfg.inference);
    std::vector<std::vector<int>> labels;
    for (const MultiObjectMask& m : r.masks) labels.push_back(m.labels());
    save_label_sequence(run.out, v.name, v.frames.front().height, v.frames.front().width, labels);
    for (const CorrectionRecord& c : r.corrections) {
      csv << v.name << ',' << c.object_id << ',' << c.frame + 1 << ',' << fmt(c.trajectory.front()) << ','
          << fmt(c.trajectory.back()) << ',' << c.trajectory.size() - 1 << ',' << (c.stopped_early ? 1 : 0)
          << '\n';
    }
  }
  run.manifest.outputs.push_back("Annotations");
}

void cmd_eval(Run& run) {
  const auto ck = run.model(run.ckpt);
  const auto clips = run.dataset("val");
  long long evals = 0;
  const auto scores = score_all(ck.model, clips, run.cfg.inference, &evals);
  auto csv = run.open("report.csv");
  write_scores(csv, scores);
  const JFReport m = summarize(scores);
  *run.log << "J " << fmt(m.j) << " F " << fmt(m.f) << " J&F " << fmt(m.jf) << "\n";
}

void cmd_ablate(Run& run, const std::vector<int>& ns, const std::vector<double>& alphas) {
  const auto ck = run.model(run.ckpt);
  const auto clips = run.dataset("val");
  auto csv = run.open("ablation.csv");
  auto timing = run.open("timing.csv");
  csv << "n_iters,alpha,J,F,JF,net_evaluations\n";
  timing << "n_iters,alpha,seconds\n";
  for (int n : ns) {
    for (double a : alphas) {
      InferenceConfig ic = run.cfg.inference;
      ic.gc = true;
      ic.correction.n_iters = n;
      ic.correction.alpha = a;
      ic.validate();
      long long evals = 0;
      const auto t0 = std::chrono::steady_clock::now();
      const JFReport m = summarize(score_all(ck.model, clips, ic, &evals));
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      csv << n << ',' << fmt(a) << ',' << fmt(m.j) << ',' << fmt(m.f) << ',' << fmt(m.jf) << ',' << evals << '\n';
      timing << n << ',' << fmt(a) << ',' << fmt(secs) << '\n';
      *run.log << "N " << n << " alpha " << a << " J&F " << fmt(m.jf) << "\n";
    }
  }
}

void cmd_attack(Run& run, const std::string& noise, const fs::path& weak, const fs::path& surrogate) {
  const auto ck = run.model(run.ckpt);
  const auto clips = run.dataset("val");
  AttackProtocol p;
  try {
    p.noise = parse_noise(noise);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  p.attack = run.cfg.attack;
  p.inference = run.cfg.inference;
  if (p.noise == NoiseKind::lowquality) {
    p.weak = std::make_shared<const SegModel>(run.model(weak, "--weak-ckpt").model);
  }
  if (p.attack.mode == AttackMode::black_box) {
    p.attack.surrogate = std::make_shared<const SegModel>(run.model(surrogate, "--surrogate-ckpt").model);
  }
  const AttackReport rep = run_attack_protocol(ck.model, p, clips, run.cfg.inference.gc);
  write_attack_csv(rep.rows, (run.out / "attack.csv").string());
  run.manifest.outputs.push_back("attack.csv");
  auto csv = run.open("summary.csv");
  const std::string cond = to_string(p.noise) + (run.cfg.inference.gc ? "+gc" : "");
  csv << "condition,J,F,JF\n";
  csv << "clean," << fmt(rep.clean.j) << ',' << fmt(rep.clean.f) << ',' << fmt(rep.clean.jf) << '\n';
  csv << cond << ',' << fmt(rep.attacked.j) << ',' << fmt(rep.attacked.f) << ',' << fmt(rep.attacked.jf) << '\n';
  csv << "max_perturbation,,," << fmt(rep.max_perturbation) << '\n';
  *run.log << "clean " << fmt(rep.clean.jf) << " " << cond << " " << fmt(rep.attacked.jf) << "\n";
}

void cmd_erf(Run& run, const std::vector<int>& ref_frames) {
  const auto ck = run.model(run.ckpt);
  const auto clips = run.dataset("val");
  auto csv = run.open("erf.csv");
  csv << "video,object,ref_frame,target_frame,inside,outside\n";
  for (const VideoClip& v : clips) {
    const int target = run.cfg.erf.target_frame.value_or(0);
    if (target >= static_cast<int>(v.length()) || !v.gt[static_cast<std::size_t>(target)]) {
      throw std::runtime_error(v.name + ": ERF target frame " + std::to_string(target + 1) + " has no annotation");
    }
    const MultiObjectMask& gt = *v.gt[static_cast<std::size_t>(target)];
    for (int rf : ref_frames) {
      if (rf < 1 || rf > static_cast<int>(v.length())) continue;
      for (int id : v.object_ids) {
        const Mask& g = *gt.find(id);
        ErfResult r = cycle_erf(ck.model, v.frames[static_cast<std::size_t>(rf - 1)],
                                v.frames[static_cast<std::size_t>(target)], g, run.cfg.erf,
                                run.cfg.correction.alpha, run.cfg.loss);
        // The ERF lives in the reference frame, so it is scored against that frame's mask.
        const auto& ref_gt = v.gt[static_cast<std::size_t>(rf - 1)];
        const Mask* support = ref_gt ? ref_gt->find(id) : nullptr;
        double in = 0.0, outside = 0.0;
        int n_in = 0, n_out = 0;
        for (std::size_t i = 0; support && i < support->size(); ++i) {
          if (support->values[i] >= kBinarizeThreshold) {
            in += r.erf.values[i];
            ++n_in;
          } else {
            outside += r.erf.values[i];
            ++n_out;
          }
        }
        csv << v.name << ',' << id << ',' << rf << ',' << target + 1 << ',';
        if (support) csv << fmt(n_in ? in / n_in : 0.0) << ',' << fmt(n_out ? outside / n_out : 0.0);
        else csv << ',';
        csv << '\n';
        Grid grid(r.erf.height, r.erf.width);
        grid.values = r.erf.values;
        const std::string stem = "erf/" + v.name + "_obj" + std::to_string(id) + "_ref" + std::to_string(rf);
        write_grid(grid, run.out / (stem + ".txt"));
        emit_contour_plot(grid, run.out / (stem + ".png"));
        run.manifest.outputs.push_back(stem + ".txt");
        run.manifest.outputs.push_back(stem + ".png");
      }
    }
  }
}

void cmd_freq(Run& run) {
  const auto ck = run.model(run.ckpt);
  const auto clips = run.dataset("val");
  InferenceConfig ic = run.cfg.inference;
  ic.gc = true;
  std::vector<Mask> inputs, outputs;
  auto csv = run.open("freq.csv");
  csv << "video,object,frame,high_band_in,high_band_out\n";
  for (const VideoClip& v : clips) {
    InferenceResult r = run_inference(ck.model, v, *v.gt.front(), ic);
    for (const CorrectionRecord& c : r.corrections) {
      csv << v.name << ',' << c.object_id << ',' << c.frame + 1 << ',' << fmt(high_band_energy(c.input)) << ','
          << fmt(high_band_energy(c.output)) << '\n';
      inputs.push_back(c.input);
      outputs.push_back(c.output);
    }
  }
  if (inputs.empty()) throw std::runtime_error("freq: no frame was corrected");
  const Grid resp = freq_response(inputs, outputs);
  write_grid(resp, run.out / "freq_response.txt");
  emit_contour_plot(resp, run.out / "freq_response.png");
  run.manifest.outputs.push_back("freq_response.txt");
  run.manifest.outputs.push_back("freq_response.png");
}

}  // namespace

void RunManifest::write(const fs::path& dir) const {
  nlohmann::ordered_json j;
  j["command"] = command;
  j["argv"] = argv;
  j["seed"] = seed;
  j["version"] = version;
  j["config_hash"] = config_hash;
  j["config"] = config_snapshot;
  j["outputs"] = outputs;
  j["status"] = status;
  if (!error.empty()) j["error"] = error;
  j["wall_seconds"] = wall_seconds;
  const fs::path tmp = dir / "run.json.tmp";
  {
    std::ofstream f(tmp, std::ios::binary);
    f << j.dump(2) << '\n';
    if (!f) throw std::runtime_error("cannot write " + tmp.string());
  }
  fs::rename(tmp, dir / "run.json");
}

std::string version_stamp() { return std::string(CVOS_VERSION) + "+" + CVOS_GIT; }

int cli_dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Cycle-consistent video object segmentation toolkit", "cvos"};
  app.require_subcommand(1);
  app.set_version_flag("--version", version_stamp());

  std::string config_path, out_dir, data_dir, ckpt_dir, split, noise = "box";
  std::string weak_dir, surrogate_dir;
  std::vector<int> ns{0, 1, 2, 5, 10, 20}, ref_frames{10, 20, 30};
  std::vector<double> alphas{1, 30, 90, 180, 270};
  std::map<std::string, std::string> flag_values;

  struct Spec {
    const char* name;
    const char* help;
    bool data, ckpt;
  };
  const Spec specs[] = {
      {"synth", "Generate the synthetic dataset in DAVIS layout", false, false},
      {"train", "Train with the cycle-consistency objective", true, false},
      {"infer", "Segment videos and save DAVIS-style annotations", true, true},
      {"eval", "Score a checkpoint with J and F", true, true},
      {"correct-ablate", "Sweep correction steps and step size", true, true},
      {"attack", "Reference-noise robustness protocol", true, true},
      {"erf", "Cycle effective receptive fields", true, true},
      {"freq", "Frequency response of gradient correction", true, true},
  };
  std::map<std::string, CLI::App*> subs;
  for (const Spec& s : specs) {
    CLI::App* sub = app.add_subcommand(s.name, s.help);
    sub->add_option("--config", config_path, "key = value file applied before flags");
    sub->add_option("--out", out_dir, "output directory")->required();
    if (s.data) {
      sub->add_option("--data", data_dir, "dataset root (default: generate from the config)");
      sub->add_option("--split", split, "split name under ImageSets");
    }
    if (s.ckpt) sub->add_option("--ckpt", ckpt_dir, "checkpoint directory")->required();
    for (const std::string& key : config_keys()) {
      sub->add_option("--" + key, flag_values[key], "config key " + key);
    }
    subs[s.name] = sub;
  }
  subs["correct-ablate"]->add_option("--ns", ns, "correction step counts")->delimiter(',');
  subs["correct-ablate"]->add_option("--alphas", alphas, "step sizes")->delimiter(',');
  subs["attack"]->add_option("--noise", noise, "lowquality, box, fgsm or mi_fgsm");
  subs["attack"]->add_option("--weak-ckpt", weak_dir, "weak model for lowquality noise");
  subs["attack"]->add_option("--surrogate-ckpt", surrogate_dir, "surrogate for black-box attacks");
  subs["erf"]->add_option("--ref-frames", ref_frames, "1-based reference frames")->delimiter(',');

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << version_stamp() << "\n";
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  CLI::App* chosen = app.get_subcommands().front();
  Run run;
  run.command = chosen->get_name();
  run.args = args;
  run.out = out_dir;
  run.data = data_dir;
  run.ckpt = ckpt_dir;
  run.split = split;
  run.log = &out;
  try {
    if (!config_path.empty()) merge_config_file(run.cfg, config_path);
    for (const std::string& key : config_keys()) {
      if (chosen->get_option("--" + key)->count() > 0) set_config_value(run.cfg, key, flag_values[key]);
    }
    run.cfg.sync();
    run.cfg.validate();
    if (run.command == "correct-ablate") {
      for (int n : ns) {
        if (n < 0) throw UsageError("--ns values must be >= 0");
      }
      for (double a : alphas) {
        if (!(a >= 0.0)) throw UsageError("--alphas values must be >= 0");
      }
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n\n" << chosen->help();
    return kExitUsage;
  }

  const auto t0 = std::chrono::steady_clock::now();
  try {
    run.begin();
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  int code = kExitOk;
  try {
    if (run.command == "synth") cmd_synth(run);
    else if (run.command == "train") cmd_train(run);
    else if (run.command == "infer") cmd_infer(run);
    else if (run.command == "eval") cmd_eval(run);
    else if (run.command == "correct-ablate") cmd_ablate(run, ns, alphas);
    else if (run.command == "attack") cmd_attack(run, noise, weak_dir, surrogate_dir);
    else if (run.command == "erf") cmd_erf(run, ref_frames);
    else cmd_freq(run);
    run.manifest.status = "ok";
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n\n" << chosen->help();
    run.manifest.status = "failed";
    run.manifest.error = e.what();
    code = kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    run.manifest.status = "failed";
    run.manifest.error = e.what();
    code = kExitFailure;
  }
  run.manifest.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  try {
    run.manifest.write(run.out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    code = kExitFailure;
  }
  return code;
}

int cli_dispatch(int argc, const char* const* argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return cli_dispatch(args, std::cout, std::cerr);
}

}  // namespace cvos
