// modmo: corpus generation, training, sampling, evaluation and export.
//
// Exit codes: 0 success, 1 validation error, 2 runtime failure.

#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "modmo/evaluate.hpp"
#include "modmo/export.hpp"

namespace {

using namespace modmo;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  std::vector<std::string> checkpoints;
};

RunConfig load_config(const Common& c) {
  RunConfig rc = c.config.empty() ? RunConfig{} : RunConfig::load(c.config);
  if (c.seed) rc.seed = *c.seed;
  return rc;
}

fs::path out_dir(const Common& c) {
  require(!c.out_dir.empty(), ErrorCode::InvalidArgument, "--out-dir is required");
  fs::create_directories(c.out_dir);
  return c.out_dir;
}

void log(const std::string& s) { std::cerr << s << '\n'; }

// ---------------------------------------------------------------------------

void cmd_gen_data(const Common& c) {
  RunConfig rc = load_config(c);
  if (c.seed) rc.corpus.seed = *c.seed;
  const fs::path dir = out_dir(c);
  const CorpusManifest m = generate_corpus(rc.corpus, dir);
  log("wrote " + std::to_string(m.entries.size()) + " clips to " + dir.string() + " (stats " + m.stats_id + ")");
}

void cmd_train(const Common& c, const std::string& stage_name, const std::string& data) {
  const Stage stage = parse_stage(stage_name);
  RunConfig rc = load_config(c);
  require(!data.empty(), ErrorCode::InvalidArgument, "--data <manifest.json> is required");
  const Corpus corpus = load_corpus(data);
  const fs::path dir = out_dir(c);

  std::optional<TrainState> base, resume;
  for (const auto& p : c.checkpoints) {
    const Checkpoint ck = read_checkpoint(p);
    const ModelInfo mi = checkpoint_info(ck);
    if (mi.stage == Stage::Mdm) {
      require(!base, ErrorCode::InvalidArgument, "more than one base checkpoint given");
      base = load_mdm_state(ck);
      require(mi.stats.id == corpus.stats.id, ErrorCode::StatsMismatch, "checkpoint stats differ from the corpus");
    } else {
      require(mi.stage == stage, ErrorCode::InvalidArgument,
              "cannot resume a " + std::string(to_string(mi.stage)) + " checkpoint in stage " + stage_name);
      resume.emplace();
      resume->stage = mi.stage;  // filled once the base is known
    }
  }

  TrainState st;
  if (stage == Stage::Mdm) {
    require(!resume, ErrorCode::InvalidArgument, "branch checkpoint given to the base stage");
    st = base ? std::move(*base) : init_mdm_state(rc);
  } else {
    require(base.has_value(), ErrorCode::MissingPrereq, "stage " + stage_name + " needs the base checkpoint");
    st = init_branch_state(rc, stage, base->mdm);
    for (const auto& p : c.checkpoints) {
      const Checkpoint ck = read_checkpoint(p);
      if (checkpoint_info(ck).stage == stage) st = load_branch_state(ck, base->mdm);
    }
  }

  const auto items = build_train_items(load_split(corpus, "train"), corpus.stats, stage, rc.canonical_bps());
  const long start = st.step;
  const auto recs = train_stage(st, items, rc, corpus.stats, [&](const LossRecord& r) {
    if (r.step % 100 == 0) log("step " + std::to_string(r.step) + " loss " + format_double(r.loss.total));
  });

  const std::string name(to_string(stage));
  write_checkpoint((dir / (name + ".ckpt")).string(), make_checkpoint(st, rc, corpus.stats));
  std::string csv = loss_log_csv(recs);
  if (start > 0) csv = "# resumed at step " + std::to_string(start) + "\n" + csv;
  write_text_file((dir / (name + "_loss.csv")).string(), csv);
  log("trained " + name + " to step " + std::to_string(st.step));
}

struct SampleArgs {
  std::string prompt;
  std::string object, audio, transcript;
  std::vector<double> goal;  // x y height heading
  int n_frames = 0;
  bool fixed_lambda = false;
  std::string name = "sample";
};

void cmd_sample(const Common& c, const SampleArgs& a) {
  const TrainedModels models = load_models(c.checkpoints);
  RunConfig rc = c.config.empty() ? models.config : RunConfig::load(c.config);
  if (c.seed) rc.seed = *c.seed;
  const fs::path dir = out_dir(c);

  ConditionBundle b = a.prompt.empty() ? ConditionBundle::null() : ConditionBundle::from_prompt(a.prompt);
  if (!a.goal.empty()) {
    require(a.goal.size() == 4, ErrorCode::InvalidArgument, "--goal takes x y height heading");
    b.goal = GoalSpec{{a.goal[0], a.goal[1]}, a.goal[2], a.goal[3]};
  }
  if (!a.object.empty()) b.object = read_object(a.object);
  if (!a.audio.empty()) {
    require(!a.transcript.empty(), ErrorCode::InvalidArgument, "--audio needs --transcript");
    b.speech = read_wav(a.audio);
    b.speech->transcript = read_transcript(a.transcript);
  }
  SampleOptions opt;
  opt.n_frames = a.n_frames > 0 ? a.n_frames : rc.sample_frames;
  opt.fps = rc.sample_fps;
  opt.seed = rc.seed;
  opt.fusion = rc.fusion;
  if (a.fixed_lambda) opt.fusion.adaptive = false;

  const SampleResult res = sample_full<Real>(b, models.networks(), rc.noise_schedule(), opt);
  json cond = {{"prompt", a.prompt}, {"object", a.object}, {"audio", a.audio}, {"transcript", a.transcript}};
  if (b.goal) cond["goal"] = goal_to_json(*b.goal);
  const json meta = {{"config", rc.to_json()},
                     {"seed", rc.seed},
                     {"n_frames", opt.n_frames},
                     {"condition", cond},
                     {"base_hash", models.base_hash},
                     {"stats_id", models.stats.id}};
  write_clip((dir / (a.name + ".clip")).string(), res.clip, meta.dump());
  std::string lam = "t,lambda_int,lambda_cospeech\n";
  for (std::size_t i = 0; i < res.lambdas.size(); ++i)
    lam += std::to_string(rc.T - 1 - static_cast<int>(i)) + "," + format_double(res.lambdas[i].first) + "," +
           format_double(res.lambdas[i].second) + "\n";
  write_text_file((dir / (a.name + "_lambdas.csv")).string(), lam);
  log("wrote " + (dir / (a.name + ".clip")).string());
}

// One row per (mode, clip) plus aggregate rows, tab-separated.
std::string report_table(const EvalReport& r) {
  std::ostringstream os;
  os << "mode\tid\tpenetration_ratio\tpenetration_value\tgoal_pos_err\tgoal_height_err\tgoal_orient_err\tbc\n";
  auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string("-"); };
  for (const auto& c : r.clips) {
    os << c.mode << '\t' << c.id << '\t' << opt(c.pen ? std::optional(c.pen->ratio) : std::nullopt) << '\t'
       << opt(c.pen ? std::optional(c.pen->value) : std::nullopt) << '\t'
       << opt(c.goal ? std::optional(c.goal->pos) : std::nullopt) << '\t'
       << opt(c.goal ? std::optional(c.goal->height) : std::nullopt) << '\t'
       << opt(c.goal ? std::optional(c.goal->orient) : std::nullopt) << '\t' << opt(c.bc) << '\n';
  }
  return os.str();
}

void cmd_evaluate(const Common& c, const std::string& data, bool save_samples) {
  const TrainedModels models = load_models(c.checkpoints);
  RunConfig rc = c.config.empty() ? models.config : RunConfig::load(c.config);
  if (c.seed) rc.seed = *c.seed;
  require(!data.empty(), ErrorCode::InvalidArgument, "--data <manifest.json> is required");
  const Corpus corpus = load_corpus(data);
  const fs::path dir = out_dir(c);
  EvalSamples samples;
  const EvalReport rep = evaluate_corpus(corpus, models, rc, rc.seed, &samples);
  write_json_file((dir / "report.json").string(), rep.to_json());
  write_text_file((dir / "report.tsv").string(), report_table(rep));
  if (save_samples) {
    fs::create_directories(dir / "samples");
    for (const auto& [mode, clips] : samples.clips) {
      if (mode == "ground_truth") continue;
      for (std::size_t i = 0; i < clips.size(); ++i) {
        const json meta = {{"mode", mode}, {"id", samples.ids[mode][i]}, {"seed", rc.seed}, {"config", rc.to_json()}};
        write_clip((dir / "samples" / (mode + "_" + std::to_string(i) + ".clip")).string(), clips[i], meta.dump());
      }
    }
  }
  log("wrote " + (dir / "report.json").string());
}

void cmd_concat(const Common& c, const std::string& upper, const std::string& lower) {
  require(!upper.empty() && !lower.empty(), ErrorCode::InvalidArgument, "--upper and --lower are required");
  const fs::path dir = out_dir(c);
  const MotionClip out = concat_baseline(read_clip(upper), read_clip(lower));
  std::vector<int> joints = upper_body_joints();
  const json meta = {{"concat", {{"upper", upper}, {"lower", lower}, {"upper_joints", joints}}}};
  write_clip((dir / "concat.clip").string(), out, meta.dump());
}

void cmd_export(const Common& c, const std::string& clip_path, const std::string& object) {
  require(!clip_path.empty(), ErrorCode::InvalidArgument, "--clip is required");
  const fs::path dir = out_dir(c);
  MotionClip clip = read_clip(clip_path);
  if (clip.normalized) {
    const TrainedModels models = load_models(c.checkpoints);
    clip = denormalize(clip, models.stats);
  }
  std::optional<ObjectGeometry> obj;
  if (!object.empty()) obj = read_object(object);
  const std::string stem = fs::path(clip_path).stem().string();
  write_text_file((dir / (stem + "_joints.csv")).string(), joints_csv(clip));
  write_text_file((dir / (stem + "_root.svg")).string(), root_path_svg(clip, obj ? &*obj : nullptr));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"modmo: modular motion diffusion with interaction and co-speech branches"};
  app.require_subcommand(1);
  Common common;
  auto add_common = [&](CLI::App* s) {
    s->add_option("--config", common.config, "Run config JSON")->check(CLI::ExistingFile);
    s->add_option("--seed", common.seed, "Seed (overrides the config)");
    s->add_option("--out-dir", common.out_dir, "Output directory");
    s->add_option("--checkpoint", common.checkpoints, "Checkpoint file (repeatable)")->check(CLI::ExistingFile);
  };

  auto* gen = app.add_subcommand("gen-data", "Generate the synthetic corpus");
  add_common(gen);

  std::string stage, data;
  auto* train = app.add_subcommand("train", "Train one stage: mdm, interaction or cospeech");
  add_common(train);
  train->add_option("stage", stage, "mdm | interaction | cospeech")
      ->required()
      ->check(CLI::IsMember({"mdm", "interaction", "cospeech"}));
  train->add_option("--data", data, "Corpus manifest")->check(CLI::ExistingFile);

  SampleArgs sa;
  auto* sample = app.add_subcommand("sample", "Sample one clip");
  add_common(sample);
  sample->add_option("--prompt", sa.prompt, "Text prompt");
  sample->add_option("--goal", sa.goal, "Goal: x y height heading")->expected(4);
  sample->add_option("--object", sa.object, "Object JSON")->check(CLI::ExistingFile);
  sample->add_option("--audio", sa.audio, "Speech WAV")->check(CLI::ExistingFile);
  sample->add_option("--transcript", sa.transcript, "Transcript JSON")->check(CLI::ExistingFile);
  sample->add_option("--frames", sa.n_frames, "Frame count (default from config)");
  sample->add_option("--name", sa.name, "Output file stem");
  sample->add_flag("--fixed-lambda", sa.fixed_lambda, "Disable adaptive fusion");

  bool save_samples = false;
  auto* evaluate = app.add_subcommand("evaluate", "Sample and score the held-out split");
  add_common(evaluate);
  evaluate->add_option("--data", data, "Corpus manifest")->check(CLI::ExistingFile);
  evaluate->add_flag("--save-samples", save_samples, "Also write every sampled clip");

  std::string upper, lower;
  auto* concat = app.add_subcommand("concat-baseline", "Upper body of one clip on the rest of another");
  add_common(concat);
  concat->add_option("--upper", upper, "Clip providing the upper body")->check(CLI::ExistingFile);
  concat->add_option("--lower", lower, "Clip providing lower body and root")->check(CLI::ExistingFile);

  std::string clip, object;
  auto* exp = app.add_subcommand("export", "Joint CSV and root-path SVG of a clip");
  add_common(exp);
  exp->add_option("--clip", clip, "Clip file")->check(CLI::ExistingFile);
  exp->add_option("--object", object, "Object JSON drawn under the path")->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (*gen) cmd_gen_data(common);
    else if (*train) cmd_train(common, stage, data);
    else if (*sample) cmd_sample(common, sa);
    else if (*evaluate) cmd_evaluate(common, data, save_samples);
    else if (*concat) cmd_concat(common, upper, lower);
    else if (*exp) cmd_export(common, clip, object);
  } catch (const modmo::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.is_validation() ? 1 : 2;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
