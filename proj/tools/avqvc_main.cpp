// avqvc: corpus preparation, training, conversion, evaluation and sweeps.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <chrono>
#include <ctime>
#include <iostream>
#include <sstream>

#include "avqvc/avqvc.hpp"

using namespace avqvc;
using json = nlohmann::ordered_json;

namespace {

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// One JSON record per run, written next to the outputs.
struct RunManifest {
  std::string command;
  KeyValues config;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::optional<std::uint64_t> seed;
  std::string started = utc_now();

  void write(const fs::path& path) const {
    json j;
    j["command"] = command;
    j["version"] = kVersion;
    j["seed"] = seed ? json(*seed) : json(nullptr);
    j["config"] = json::object();
    for (const auto& [k, v] : config.entries()) j["config"][k] = v;
    j["inputs"] = inputs;
    j["outputs"] = outputs;
    j["started"] = started;
    j["finished"] = utc_now();
    write_file_atomic(path, j.dump(2) + "\n");
  }
};

// ---------------------------------------------------------------------------
// Configuration: defaults < config file < --set overrides < --seed.

KeyValues train_keys() {
  KeyValues kv = ModelConfig{}.to_kv();
  kv.merge(FrontendConfig{}.to_kv());
  kv.merge(LossWeights{}.to_kv());
  kv.merge(TrainConfig{}.to_kv());
  return kv;
}

// The sweep starts from the small synthetic protocol, not the full-size defaults.
KeyValues sweep_keys() {
  const SyntheticProtocol p = tiny_protocol();
  KeyValues kv = p.run.model.to_kv();
  kv.merge(p.run.weights.to_kv());
  kv.merge(p.run.train.to_kv());
  kv.merge(p.corpus.to_kv());
  return kv;
}

std::string keys_footer(const KeyValues& defaults) {
  std::string out = "\nRecognized config keys (default values):\n";
  for (const auto& [k, v] : defaults.entries()) out += "  " + k + " = " + v + "\n";
  return out;
}

struct ConfigArgs {
  std::string file;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", file, "key = value config file")->check(CLI::ExistingFile);
    cmd->add_option("--set", overrides, "override one key, key=value (repeatable; wins over --config)");
    cmd->add_option("--seed", seed, "seed for all randomness in this command");
  }

  KeyValues resolve(const KeyValues& allowed) const {
    KeyValues kv;
    if (!file.empty()) kv = KeyValues::load(file);
    for (const auto& s : overrides) {
      const auto eq = s.find('=');
      if (eq == std::string::npos || eq == 0) {
        throw Error(ErrorKind::config, "--set expects key=value, got '" + s + "'");
      }
      kv.merge(KeyValues::parse(s.substr(0, eq) + " = " + s.substr(eq + 1), "--set"));
    }
    for (const auto& [k, v] : kv.entries()) {
      if (!allowed.has(k)) throw Error(ErrorKind::config, "unknown config key '" + k + "'");
    }
    return kv;
  }
};

void apply_seed(KeyValues& kv, std::uint64_t seed, bool with_synth) {
  kv.set("model.seed", seed);
  kv.set("train.seed", seed);
  if (with_synth) kv.set("synth.seed", seed);
}

// Features from a .wav (extracted with `frontend`) or a .npy with sidecar.
MelSpectrogram read_mel(const fs::path& path, const FrontendConfig& frontend) {
  if (path.extension() == ".wav") return compute_mel(load_audio(path), frontend);
  if (path.extension() == ".npy") return load_features(path);
  throw Error(ErrorKind::data, path.string() + ": expected a .wav or .npy file");
}

json score_json(const DisentanglementScore& s) {
  return {{"separation", s.separation}, {"intra_cosine", s.intra_cosine}, {"inter_cosine", s.inter_cosine},
          {"self_l1", s.self_l1},       {"swap_l1", s.swap_l1},           {"swap_ratio", s.swap_ratio},
          {"intra_pairs", s.intra_pairs}, {"inter_pairs", s.inter_pairs}};
}

// ---------------------------------------------------------------------------

struct SynthArgs {
  ConfigArgs cfg;
  std::string out;
};

int cmd_synth_corpus(const SynthArgs& a) {
  RunManifest man{"synth-corpus"};
  KeyValues allowed = SyntheticCorpusSpec{}.to_kv();
  KeyValues kv = a.cfg.resolve(allowed);
  if (a.cfg.seed) kv.set("synth.seed", *a.cfg.seed);
  const SyntheticCorpusSpec spec = SyntheticCorpusSpec::from_kv(kv);
  const SyntheticCorpus corpus = generate_synthetic_corpus(spec);
  const fs::path out = a.out;
  FrontendConfig fe;
  fe.n_mels = spec.feature_dim;
  for (const auto& u : corpus.utterances) {
    const fs::path p = out / u.speaker_id / (u.utterance_id + ".npy");
    save_features(p, {u.frames, fe, u.speaker_id, u.utterance_id});
    npy::save(out / "_truth" / "content" / (u.utterance_id + ".npy"), u.content);
    man.outputs.push_back(p.string());
  }
  npy::save(out / "_truth" / "offsets.npy", corpus.offsets);
  npy::save(out / "_truth" / "alphabet.npy", corpus.alphabet);
  write_file_atomic(out / "_truth" / "spec.kv", spec.to_kv().to_string());
  man.config = spec.to_kv();
  man.seed = spec.seed;
  man.write(out / "manifest.json");
  std::cout << "wrote " << corpus.utterances.size() << " utterances from " << spec.n_speakers << " speakers to "
            << out.string() << "\n";
  return 0;
}

struct PrepareArgs {
  ConfigArgs cfg;
  std::string data;
  std::string out;
};

int cmd_prepare(const PrepareArgs& a) {
  RunManifest man{"prepare"};
  KeyValues kv = a.cfg.resolve(FrontendConfig{}.to_kv());
  FrontendConfig fe = FrontendConfig::from_kv(kv);
  // .npy inputs carry their own frontend; adopt it unless keys were given
  if (kv.entries().empty()) {
    for (const auto& spk : fs::directory_iterator(a.data)) {
      if (!spk.is_directory() || spk.path().filename().string().starts_with('_')) continue;
      for (const auto& f : fs::directory_iterator(spk.path())) {
        if (f.path().extension() == ".npy") {
          fe = load_features(f.path()).config;
          goto found;
        }
      }
    }
  found:;
  }
  const std::uint64_t seed = a.cfg.seed.value_or(0);
  const fs::path out = a.out;
  const fs::path cache = cache_root(out / "cache");
  const PreparedCorpus p = prepare_corpus(a.data, out, fe, seed, cache);
  man.config = fe.to_kv();
  man.config.set("split.seed", seed);
  man.config.set("split.cache", fs::absolute(cache).string());
  man.seed = seed;
  man.inputs.push_back(a.data);
  for (const char* name : {"train.txt", "eval.txt", "test.txt"}) man.outputs.push_back((out / name).string());
  man.write(out / "manifest.json");
  std::cout << "speakers: train " << p.split.train.size() << ", eval " << p.split.eval.size() << ", test "
            << p.split.test.size() << "; " << p.files.size() << " utterances (" << p.cache_hits
            << " cached)\n";
  return 0;
}

struct TrainArgs {
  ConfigArgs cfg;
  std::string data;
  std::string split = "train";
  std::string out;
  bool resume = false;
};

int cmd_train(const TrainArgs& a) {
  RunManifest man{"train"};
  KeyValues kv = a.cfg.resolve(train_keys());
  if (a.cfg.seed) apply_seed(kv, *a.cfg.seed, false);
  const fs::path list = fs::path(a.data) / (a.split + ".txt");
  const LoadedSplit data = load_split(list);

  // the features decide the frontend; explicit keys must agree with them
  const FrontendConfig fe = FrontendConfig::from_kv(kv, "frontend.", data.frontend);
  if (!(fe == data.frontend)) {
    throw Error(ErrorKind::compatibility, "frontend keys differ from the configuration the features in " +
                                              list.string() + " were extracted with");
  }
  if (!kv.has("model.n_mels")) kv.set("model.n_mels", fe.n_mels);
  const ModelConfig mc = ModelConfig::from_kv(kv);
  const TrainConfig tc = TrainConfig::from_kv(kv);
  const LossWeights w = LossWeights::from_kv(kv);

  const fs::path out = a.out;
  fs::create_directories(out);
  const fs::path ckpt = out / "checkpoint.ckpt";
  TrainHooks hooks;
  hooks.checkpoint = ckpt;
  hooks.metrics_log = out / "metrics.tsv";
  Checkpoint ck;
  if (a.resume && fs::exists(ckpt)) {
    ck = load_checkpoint(ckpt);
    if (!(ck.model.config() == mc) || !(ck.frontend == fe)) {
      throw Error(ErrorKind::compatibility, "checkpoint in " + out.string() + " was trained with another model "
                                                                            "or frontend configuration");
    }
    ck.config.steps = tc.steps;
  } else {
    fs::remove(*hooks.metrics_log);
    ck = init_checkpoint(tc, mc, fe, w, data.corpus);
  }
  const std::int64_t total = ck.config.steps;
  hooks.on_step = [&](std::int64_t s, const LossReport& r) {
    if ((s + 1) % 100 == 0 || s + 1 == total) {
      std::fprintf(stderr, "step %lld/%lld  total %.5f  recon %.5f%s\n", static_cast<long long>(s + 1),
                   static_cast<long long>(total), r.total, r.recon, r.schedule_triggered ? "  [schedule]" : "");
    }
  };
  ck = train(std::move(ck), data.corpus, hooks);
  save_codebook(ck, out / "codebook.npy");
  man.config = checkpoint_config_kv(ck);
  man.seed = ck.config.seed;
  man.inputs.push_back(list.string());
  man.outputs = {ckpt.string(), hooks.metrics_log->string(), (out / "codebook.npy").string()};
  man.write(out / "manifest.json");
  std::cout << ckpt.string() << "\n";
  return 0;
}

struct ConvertArgs {
  std::string ckpt, source, target, out, wav;
  std::optional<std::uint64_t> seed;
  int iterations = 60;
};

int cmd_convert(const ConvertArgs& a) {
  RunManifest man{"convert"};
  const Checkpoint ck = load_checkpoint(a.ckpt);
  const MelSpectrogram src = read_mel(a.source, ck.frontend);
  const MelSpectrogram tgt = read_mel(a.target, ck.frontend);
  const MelSpectrogram converted = convert(ck, src, tgt);

  fs::path out = a.out;
  fs::path wav = a.wav;
  if (out.extension() == ".wav") {
    wav = out;
    out.replace_extension(".npy");
  } else if (out.extension() != ".npy") {
    throw Error(ErrorKind::config, "--out must end in .npy or .wav");
  }
  save_features(out, converted);
  man.outputs.push_back(out.string());
  if (!wav.empty()) {
    SynthesisOptions opts;
    opts.seed = a.seed.value_or(0);
    opts.iterations = a.iterations;
    save_wav(wav, synthesize_waveform(converted.frames, ck.frontend, opts));
    man.outputs.push_back(wav.string());
  }
  man.config = checkpoint_config_kv(ck);
  man.seed = a.seed.value_or(0);
  man.inputs = {a.ckpt, a.source, a.target};
  fs::path manifest = out;
  manifest.replace_extension(".manifest.json");
  man.write(manifest);
  std::cout << out.string() << (wav.empty() ? "" : "\n" + wav.string()) << "\n";
  return 0;
}

struct EvalArgs {
  std::string reference, converted, ckpt, data, split = "eval", out;
};

int cmd_eval(const EvalArgs& a) {
  RunManifest man{"eval"};
  json report;
  const bool mcd_mode = !a.reference.empty() || !a.converted.empty();
  const bool score_mode = !a.ckpt.empty() || !a.data.empty();
  if (mcd_mode == score_mode) {
    throw Error(ErrorKind::config, "give either --reference and --converted, or --ckpt and --data");
  }
  if (mcd_mode) {
    if (a.reference.empty() || a.converted.empty()) throw Error(ErrorKind::config, "MCD needs both mels");
    const MelSpectrogram ref = read_mel(a.reference, FrontendConfig{});
    const MelSpectrogram conv = read_mel(a.converted, ref.config);
    if (!(ref.config == conv.config)) {
      throw Error(ErrorKind::compatibility, "reference and converted features use different frontends");
    }
    report["mcd_db"] = mel_mcd(ref.frames, conv.frames);
    report["reference_frames"] = ref.n_frames();
    report["converted_frames"] = conv.n_frames();
    man.inputs = {a.reference, a.converted};
  } else {
    if (a.ckpt.empty() || a.data.empty()) throw Error(ErrorKind::config, "scoring needs --ckpt and --data");
    const Checkpoint ck = load_checkpoint(a.ckpt);
    const fs::path list = fs::path(a.data) / (a.split + ".txt");
    const LoadedSplit data = load_split(list);
    if (!(data.frontend == ck.frontend)) {
      throw Error(ErrorKind::compatibility, list.string() + ": features do not match the checkpoint's frontend");
    }
    report["disentanglement"] = score_json(disentanglement_score(CheckpointEmbedder(ck), data.corpus));
    report["utterances"] = data.corpus.size();
    man.config = checkpoint_config_kv(ck);
    man.inputs = {a.ckpt, list.string()};
  }
  const std::string text = report.dump(2) + "\n";
  std::cout << text;
  const fs::path out = a.out;
  write_file_atomic(out / "eval.json", text);
  man.outputs.push_back((out / "eval.json").string());
  man.write(out / "manifest.json");
  return 0;
}

struct SweepArgs {
  ConfigArgs cfg;
  std::string sizes;
  std::string out;
  int threads = 1;
};

std::vector<int> parse_sizes(const std::string& text) {
  std::vector<int> sizes;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    KeyValues kv;
    kv.set("size", item);
    sizes.push_back(kv.get_int<int>("size"));
  }
  if (sizes.empty()) throw Error(ErrorKind::config, "--sizes is empty");
  return sizes;
}

int cmd_sweep(const SweepArgs& a) {
  RunManifest man{"sweep"};
  KeyValues kv = a.cfg.resolve(sweep_keys());
  if (a.cfg.seed) apply_seed(kv, *a.cfg.seed, true);
  SyntheticProtocol p = tiny_protocol();
  p.corpus = SyntheticCorpusSpec::from_kv(kv, p.corpus);
  if (!kv.has("model.n_mels")) kv.set("model.n_mels", p.corpus.feature_dim);
  p.run.model = ModelConfig::from_kv(kv, p.run.model);
  p.run.train = TrainConfig::from_kv(kv, p.run.train);
  p.run.weights = LossWeights::from_kv(kv, p.run.weights);
  p.run.threads = a.threads;
  const std::vector<int> sizes = a.sizes.empty() ? default_sweep_sizes() : parse_sizes(a.sizes);

  const SweepReport r = codebook_sweep(sizes, p.run, generate_synthetic_corpus(p.corpus));
  const fs::path out = a.out;
  write_file_atomic(out / "sweep.tsv", r.to_tsv());
  write_file_atomic(out / "sweep.json", r.to_json());
  man.config = p.run.model.to_kv();
  man.config.merge(p.run.train.to_kv());
  man.config.merge(p.run.weights.to_kv());
  man.config.merge(p.corpus.to_kv());
  man.seed = p.run.train.seed;
  man.outputs = {(out / "sweep.tsv").string(), (out / "sweep.json").string()};
  man.write(out / "manifest.json");
  std::cout << r.to_tsv();
  bool all_ok = true;
  for (const auto& row : r.rows) all_ok = all_ok && row.ok;
  return all_ok ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"One-shot voice conversion with a vector-quantized autoencoder"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  SynthArgs synth;
  auto* c_synth = app.add_subcommand("synth-corpus", "write a synthetic feature corpus with known factors");
  synth.cfg.attach(c_synth);
  c_synth->add_option("--out", synth.out, "output directory")->required();
  c_synth->footer(keys_footer(SyntheticCorpusSpec{}.to_kv()));

  PrepareArgs prep;
  auto* c_prep = app.add_subcommand("prepare", "extract features and write speaker-level splits");
  prep.cfg.attach(c_prep);
  c_prep->add_option("--data", prep.data, "corpus root: <speaker>/<utterance>.wav or .npy")
      ->required()
      ->check(CLI::ExistingDirectory);
  c_prep->add_option("--out", prep.out, "output directory for split lists (cache: $AVQVC_CACHE_DIR or <out>/cache)")
      ->required();
  c_prep->footer(keys_footer(FrontendConfig{}.to_kv()));

  TrainArgs tr;
  auto* c_train = app.add_subcommand("train", "train a model on a prepared split");
  tr.cfg.attach(c_train);
  c_train->add_option("--data", tr.data, "directory written by prepare")->required();
  c_train->add_option("--split", tr.split, "split list to train on")->capture_default_str();
  c_train->add_option("--out", tr.out, "run directory (checkpoint, metrics, manifest)")->required();
  c_train->add_flag("--resume", tr.resume, "continue from <out>/checkpoint.ckpt if present");
  c_train->footer(keys_footer(train_keys()));

  ConvertArgs cv;
  auto* c_conv = app.add_subcommand("convert", "content from --source, speaker from --target");
  c_conv->add_option("--ckpt", cv.ckpt, "checkpoint")->required()->check(CLI::ExistingFile);
  c_conv->add_option("--source", cv.source, "source utterance (.wav or .npy)")->required()->check(CLI::ExistingFile);
  c_conv->add_option("--target", cv.target, "target utterance (.wav or .npy)")->required()->check(CLI::ExistingFile);
  c_conv->add_option("--out", cv.out, "output .npy (mel) or .wav (mel .npy written alongside)")->required();
  c_conv->add_option("--wav", cv.wav, "also synthesize a waveform here");
  c_conv->add_option("--iterations", cv.iterations, "phase reconstruction iterations")->capture_default_str();
  c_conv->add_option("--seed", cv.seed, "phase initialization seed");

  EvalArgs ev;
  auto* c_eval = app.add_subcommand("eval", "MCD between two utterances, or disentanglement scores on a split");
  c_eval->add_option("--reference", ev.reference, "reference utterance (.wav or .npy)");
  c_eval->add_option("--converted", ev.converted, "converted utterance (.wav or .npy)");
  c_eval->add_option("--ckpt", ev.ckpt, "checkpoint to score");
  c_eval->add_option("--data", ev.data, "directory written by prepare");
  c_eval->add_option("--split", ev.split, "split list to score")->capture_default_str();
  c_eval->add_option("--out", ev.out, "report directory")->required();

  SweepArgs sw;
  auto* c_sweep = app.add_subcommand("sweep", "codebook-size sweep on a synthetic corpus");
  sw.cfg.attach(c_sweep);
  c_sweep->add_option("--sizes", sw.sizes, "comma-separated codebook sizes (default 128,256,512,1024)");
  c_sweep->add_option("--threads", sw.threads, "rows trained in parallel")->capture_default_str();
  c_sweep->add_option("--out", sw.out, "report directory")->required();
  c_sweep->footer(keys_footer(sweep_keys()));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*c_synth) return cmd_synth_corpus(synth);
    if (*c_prep) return cmd_prepare(prep);
    if (*c_train) return cmd_train(tr);
    if (*c_conv) return cmd_convert(cv);
    if (*c_eval) return cmd_eval(ev);
    if (*c_sweep) return cmd_sweep(sw);
  } catch (const Error& e) {
    std::cerr << "avqvc: " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "avqvc: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
