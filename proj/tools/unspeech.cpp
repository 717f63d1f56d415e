// Copyright (c) 2026 The unspeech-cpp Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// unspeech: feature extraction, training, embedding and evaluation.
// Exit codes: 0 success, 1 runtime failure (JSON error on stdout), 2 usage.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "unspeech.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace unspeech;

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Globals {
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::size_t threads = 1;
};

std::size_t default_threads() {
  if (const char* env = std::getenv("UNSPEECH_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v >= 1) return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
    }
    throw UsageError(std::string("UNSPEECH_THREADS must be a positive integer, got \"") + env + "\"");
  }
  return 1;
}

void emit(json summary, const std::string& command, std::uint64_t seed) {
  summary["command"] = command;
  summary["seed"] = seed;
  std::cout << summary.dump() << std::endl;
}

/// Writes to `path` through a temporary file so a failed run leaves no
/// partial artifact behind.
template <typename Fn>
void write_atomically(const std::string& path, Fn&& write) {
  const std::string tmp = path + ".partial";
  try {
    write(tmp);
  } catch (...) {
    std::error_code ec;
    fs::remove(tmp, ec);
    throw;
  }
  fs::rename(tmp, path);
}

std::map<std::string, std::string> speaker_map(const Manifest& m) {
  std::map<std::string, std::string> out;
  for (const auto& e : m.entries) {
    if (!e.speaker_id) throw Error("manifest entry '" + e.utterance_id + "' has no speaker label");
    out[e.utterance_id] = *e.speaker_id;
  }
  return out;
}

std::vector<std::string> speakers_for(const EmbeddingStore& store, const Manifest& m, const std::string& what) {
  const auto map = speaker_map(m);
  std::vector<std::string> out;
  for (const auto& r : store.records) {
    auto it = map.find(r.utterance_id);
    if (it == map.end()) throw Error(what + ": utterance '" + r.utterance_id + "' is not in the manifest");
    out.push_back(it->second);
  }
  return out;
}

// --- fbank ------------------------------------------------------------------

struct FbankPlan {
  std::string manifest, out;
  FbankConfig cfg;
  double speed = 1.0;
};

json run_fbank(const FbankPlan& p) {
  const Manifest m = parse_manifest(p.manifest);
  std::size_t frames = 0;
  write_atomically(p.out, [&](const std::string& tmp) {
    FeatureStoreWriter w(tmp, static_cast<std::size_t>(p.cfg.num_mel_bins));
    for (const auto& e : m.entries) {
      AudioBuffer audio = load_wav(e.audio_path);
      if (p.speed != 1.0) audio = speed_perturb(audio, p.speed);
      const auto f = compute_fbank(audio, p.cfg, e.utterance_id);
      frames += f.frames;
      w.append(f);
    }
    w.close();
  });
  return {{"utterances", m.size()}, {"frames", frames}, {"num_mel_bins", p.cfg.num_mel_bins}, {"out", p.out}};
}

// --- synth ------------------------------------------------------------------

struct SynthPlan {
  std::string out_dir;
  SyntheticCorpusConfig cfg;
};

json run_synth(const SynthPlan& p) {
  const auto syn = make_synthetic_corpus(p.cfg);
  fs::create_directories(p.out_dir);
  const std::string manifest = (fs::path(p.out_dir) / "manifest.jsonl").string();
  const std::string features = (fs::path(p.out_dir) / "features.ufbk").string();
  write_manifest(syn.manifest(), manifest);
  write_feature_store(features, syn.features, p.cfg.bins);
  return {{"utterances", syn.features.size()}, {"speakers", p.cfg.speakers}, {"manifest", manifest},
          {"features", features}};
}

// --- train ------------------------------------------------------------------

struct TrainPlan {
  std::string manifest, features, config_path, out_dir, resume, eval_manifest;
  TrainConfig config;
};

json run_train(const TrainPlan& p) {
  const Manifest manifest = parse_manifest(p.manifest);
  const Corpus corpus = load_corpus(manifest, p.features, p.config.sampling.window_width);
  TrainConfig config = p.config;
  if (!corpus.empty() && corpus.bins() != config.arch.input_bins)
    throw ShapeError(p.features + ": store has " + std::to_string(corpus.bins()) + " mel bins, model expects " +
                     std::to_string(config.arch.input_bins));
  if (corpus.dropped) std::cerr << "train: dropped " << corpus.dropped << " utterances shorter than one window\n";

  std::optional<Checkpoint> resume;
  if (!p.resume.empty()) resume = load_checkpoint(p.resume, &config.arch);

  std::optional<LabeledSet> held_out;
  if (!p.eval_manifest.empty()) {
    const Manifest em = parse_manifest(p.eval_manifest);
    held_out = LabeledSet{select_features(em, read_feature_store(p.features), p.features), em.speakers()};
  }

  fs::create_directories(p.out_dir);
  const fs::path dir(p.out_dir);
  std::ofstream log(dir / "train_log.jsonl", resume ? std::ios::app : std::ios::trunc);
  if (!log) throw Error((dir / "train_log.jsonl").string() + ": cannot open for writing");
  {
    std::ofstream cfg_out(dir / "config.json");
    cfg_out << json(config).dump(2) << '\n';
  }

  TrainCallbacks cb;
  cb.on_log = [&](const TrainLogRecord& r) {
    const auto line = r.to_json(config.log_wall_time).dump();
    log << line << '\n';
    log.flush();
    std::cerr << line << '\n';
  };
  cb.on_checkpoint = [&](const Checkpoint& c) {
    char name[64];
    std::snprintf(name, sizeof name, "step-%08llu.uckp", static_cast<unsigned long long>(c.step));
    save_checkpoint(c, (dir / name).string());
  };

  const auto result = train(corpus, config, resume, cb, held_out ? &*held_out : nullptr);
  const std::string model_path = (dir / "model.uckp").string();
  write_atomically(model_path, [&](const std::string& tmp) { save_checkpoint(result.checkpoint, tmp); });

  json summary{{"steps", result.checkpoint.step}, {"checkpoint", model_path}, {"utterances", corpus.size()},
               {"dropped", corpus.dropped}};
  if (!result.log.empty()) {
    const auto& last = result.log.back();
    summary["final"] = last.to_json(false);
  }
  return summary;
}

// --- embed ------------------------------------------------------------------

struct EmbedPlan {
  std::string checkpoint, features, manifest, out;
  EmbedOptions opts;
};

json run_embed(const EmbedPlan& p) {
  const Checkpoint ckpt = load_checkpoint(p.checkpoint);
  const auto model = ckpt.model();
  const Manifest m = parse_manifest(p.manifest);
  const auto feats = select_features(m, read_feature_store(p.features), p.features);
  EmbeddingStore store;
  store.dim = model.arch().embedding_dim();
  std::size_t skipped = 0;
  for (const auto& f : feats) {
    if (f.bins != model.arch().input_bins)
      throw ShapeError("utterance '" + f.utterance_id + "' has " + std::to_string(f.bins) +
                       " mel bins, model expects " + std::to_string(model.arch().input_bins));
    if (f.frames < model.arch().input_width) {
      std::cerr << "embed: skipping '" << f.utterance_id << "' (" << f.frames << " frames)\n";
      ++skipped;
      continue;
    }
    store.add(f.utterance_id, embed_utterance(f, model, p.opts));
  }
  if (store.records.empty()) throw Error("embed: no utterance is long enough for one window");
  write_atomically(p.out, [&](const std::string& tmp) { write_embeddings(store, tmp); });
  return {{"embeddings", store.records.size()}, {"dim", store.dim}, {"skipped", skipped}, {"out", p.out}};
}

// --- eer --------------------------------------------------------------------

struct EerPlan {
  std::string embeddings, manifest;
  bool raw_euclidean = false;
};

json run_eer(const EerPlan& p) {
  const auto store = read_embeddings(p.embeddings);
  const auto speakers = speakers_for(store, parse_manifest(p.manifest), p.embeddings);
  std::vector<std::vector<float>> vecs;
  for (const auto& r : store.records) vecs.push_back(r.vector);
  const auto trials = d2_trials(vecs, speakers, !p.raw_euclidean);
  const auto r = equal_error_rate(trials);
  return {{"eer", r.eer}, {"threshold", r.threshold}, {"trials", trials.size()}};
}

// --- cluster ----------------------------------------------------------------

struct ClusterPlan {
  std::string embeddings, out;
  ClusteringConfig cfg;
};

json run_cluster(const ClusterPlan& p) {
  const auto store = read_embeddings(p.embeddings);
  std::vector<std::vector<float>> vecs;
  for (const auto& r : store.records) vecs.push_back(r.vector);
  const auto res = cluster_hdbscan(unit_normalized(vecs), p.cfg);
  write_atomically(p.out, [&](const std::string& tmp) {
    std::ofstream out(tmp);
    if (!out) throw Error(tmp + ": cannot open for writing");
    for (std::size_t i = 0; i < store.records.size(); ++i)
      out << json{{"id", store.records[i].utterance_id}, {"cluster", res.labels[i]}}.dump() << '\n';
    out.close();
    if (!out) throw Error(tmp + ": write failed");
  });
  return {{"num_clusters", res.num_clusters}, {"outliers", res.num_outliers()}, {"points", store.records.size()},
          {"out", p.out}};
}

// --- cluster-eval -----------------------------------------------------------

struct ClusterEvalPlan {
  std::string assignments, manifest;
};

json run_cluster_eval(const ClusterEvalPlan& p) {
  const auto speakers = speaker_map(parse_manifest(p.manifest));
  std::ifstream in(p.assignments);
  if (!in) throw Error(p.assignments + ": cannot open assignments");
  std::vector<int> predicted;
  std::vector<std::string> reference;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = p.assignments + ":" + std::to_string(lineno);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error&) {
      throw FormatError(where + ": malformed JSON");
    }
    if (!j.is_object() || !j.contains("id") || !j["id"].is_string() || !j.contains("cluster") ||
        !j["cluster"].is_number_integer())
      throw FormatError(where + ": expected {\"id\": string, \"cluster\": integer}");
    const auto id = j["id"].get<std::string>();
    auto it = speakers.find(id);
    if (it == speakers.end()) throw Error(where + ": utterance '" + id + "' is not in the manifest");
    predicted.push_back(j["cluster"].get<int>());
    reference.push_back(it->second);
  }
  if (predicted.empty()) throw Error(p.assignments + ": no assignments");
  const auto ref = encode_labels(reference);
  std::size_t outliers = 0;
  std::set<int> clusters;
  for (int l : predicted) {
    if (l == kOutlier) ++outliers;
    else clusters.insert(l);
  }

  const auto single = apply_outlier_policy(predicted, ref, OutlierPolicy::kSingletons);
  const auto excl = apply_outlier_policy(predicted, ref, OutlierPolicy::kExclude);
  json out{{"num_clusters", clusters.size()},
           {"outliers", outliers},
           {"points", predicted.size()},
           {"ari", adjusted_rand_index(single.first, single.second)},
           {"nmi", normalized_mutual_information(single.first, single.second)}};
  if (excl.first.empty()) {
    out["ari_excluding_outliers"] = nullptr;
    out["nmi_excluding_outliers"] = nullptr;
  } else {
    out["ari_excluding_outliers"] = adjusted_rand_index(excl.first, excl.second);
    out["nmi_excluding_outliers"] = normalized_mutual_information(excl.first, excl.second);
  }
  return out;
}

// --- argument handling ------------------------------------------------------

ArchitectureConfig preset_arch(const std::string& preset, std::size_t width, std::size_t bins) {
  static const std::size_t allowed[] = {32, 64, 128};
  if (std::find(std::begin(allowed), std::end(allowed), width) == std::end(allowed))
    throw UsageError("--window-width " + std::to_string(width) + ": the " + preset +
                     " preset requires a window width in {32, 64, 128}");
  if (preset == "vgg-a") return ArchitectureConfig::vgg_a(width, bins);
  return ArchitectureConfig::small(width, bins);
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError(path + ": cannot open config");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw UsageError(path + ": malformed JSON config (" + e.what() + ")");
  }
}

std::uint32_t store_bins(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError(path + ": cannot open feature store");
  io::expect_magic(in, "UFBK", path);
  io::read_pod<std::uint32_t>(in, path + " header");
  return io::read_pod<std::uint32_t>(in, path + " header");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"unspeech: unsupervised speech context embeddings"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "Seed for every random stream (echoed in all output)");
  std::optional<std::size_t> threads_flag;
  app.add_option("--threads", threads_flag, "Worker cap (default: $UNSPEECH_THREADS or 1)")
      ->check(CLI::PositiveNumber);

  // fbank
  FbankPlan fb;
  auto* c_fbank = app.add_subcommand("fbank", "Compute log mel filterbank features for a manifest");
  c_fbank->add_option("--manifest", fb.manifest, "JSON-lines manifest")->required()->check(CLI::ExistingFile);
  c_fbank->add_option("--out", fb.out, "Output feature store (.ufbk)")->required();
  c_fbank->add_option("--sample-rate", fb.cfg.sample_rate, "Expected audio sample rate (Hz)");
  c_fbank->add_option("--num-mel-bins", fb.cfg.num_mel_bins, "Mel filters");
  c_fbank->add_option("--frame-length", fb.cfg.frame_length, "Frame length (s)");
  c_fbank->add_option("--frame-shift", fb.cfg.frame_shift, "Frame shift (s)");
  c_fbank->add_option("--low-freq", fb.cfg.low_freq, "Lowest filter edge (Hz)");
  c_fbank->add_option("--high-freq", fb.cfg.high_freq, "Highest filter edge (Hz, <= 0 for Nyquist)");
  c_fbank->add_option("--speed", fb.speed, "Speed perturbation factor applied before extraction");

  // synth
  SynthPlan sy;
  auto* c_synth = app.add_subcommand("synth", "Write the synthetic speaker corpus (manifest + features)");
  c_synth->add_option("--out-dir", sy.out_dir, "Output directory")->required();
  c_synth->add_option("--speakers", sy.cfg.speakers, "Number of speakers")->check(CLI::PositiveNumber);
  c_synth->add_option("--utterances-per-speaker", sy.cfg.utterances_per_speaker)->check(CLI::PositiveNumber);

  // train
  TrainPlan tr;
  std::string preset = "small";
  std::optional<std::size_t> window_width, contexts, negatives, anchor_hop, max_steps, batch_groups, epochs,
      checkpoint_every;
  std::optional<double> lr;
  auto* c_train = app.add_subcommand("train", "Train the siamese context model");
  c_train->add_option("--manifest", tr.manifest, "Training manifest")->required()->check(CLI::ExistingFile);
  c_train->add_option("--features", tr.features, "Feature store")->required()->check(CLI::ExistingFile);
  c_train->add_option("--config", tr.config_path, "TrainConfig JSON")->check(CLI::ExistingFile);
  c_train->add_option("--out-dir", tr.out_dir, "Directory for checkpoints and the log")->required();
  c_train->add_option("--resume", tr.resume, "Checkpoint to resume from")->check(CLI::ExistingFile);
  c_train->add_option("--eval-manifest", tr.eval_manifest, "Labelled utterances for EER snapshots")
      ->check(CLI::ExistingFile);
  c_train->add_option("--preset", preset, "Architecture preset")->check(CLI::IsMember({"small", "vgg-a"}));
  c_train->add_option("--window-width", window_width, "Window width in frames");
  c_train->add_option("--contexts-per-side", contexts, "Context windows on each side");
  c_train->add_option("--negatives", negatives, "Negative pairs per target (k)");
  c_train->add_option("--anchor-hop", anchor_hop, "Anchor stride in frames (default: window width)");
  c_train->add_option("--max-steps", max_steps, "Stop after this many steps");
  c_train->add_option("--batch-groups", batch_groups, "Target groups per step");
  c_train->add_option("--epochs", epochs, "Epochs");
  c_train->add_option("--checkpoint-every", checkpoint_every, "Checkpoint cadence in steps");
  c_train->add_option("--learning-rate", lr, "ADAM learning rate");

  // embed
  EmbedPlan em;
  std::string head = "target";
  auto* c_embed = app.add_subcommand("embed", "Utterance embeddings from a checkpoint");
  c_embed->add_option("--checkpoint", em.checkpoint)->required()->check(CLI::ExistingFile);
  c_embed->add_option("--features", em.features)->required()->check(CLI::ExistingFile);
  c_embed->add_option("--manifest", em.manifest)->required()->check(CLI::ExistingFile);
  c_embed->add_option("--out", em.out, "Output embedding store (.uemb)")->required();
  c_embed->add_option("--stride", em.opts.stride, "Sliding window stride in frames")->check(CLI::PositiveNumber);
  c_embed->add_flag("--normalize-windows", em.opts.normalize_windows, "Unit-normalize windows before averaging");
  c_embed->add_option("--head", head, "Embedding head")->check(CLI::IsMember({"target", "context"}));

  // eer
  EerPlan ep;
  auto* c_eer = app.add_subcommand("eer", "Pairwise same/different-speaker EER (d2)");
  c_eer->add_option("--embeddings", ep.embeddings)->required()->check(CLI::ExistingFile);
  c_eer->add_option("--manifest", ep.manifest, "Manifest with speaker labels")->required()->check(CLI::ExistingFile);
  c_eer->add_flag("--raw-euclidean", ep.raw_euclidean, "Skip unit normalization (ablation)");

  // cluster
  ClusterPlan cp;
  auto* c_cluster = app.add_subcommand("cluster", "HDBSCAN over unit-normalized embeddings");
  c_cluster->add_option("--embeddings", cp.embeddings)->required()->check(CLI::ExistingFile);
  c_cluster->add_option("--min-cluster-size", cp.cfg.min_cluster_size);
  c_cluster->add_option("--min-samples", cp.cfg.min_samples);
  c_cluster->add_option("--out", cp.out, "JSON-lines assignments")->required();

  // cluster-eval
  ClusterEvalPlan ce;
  auto* c_ceval = app.add_subcommand("cluster-eval", "ARI/NMI of assignments against manifest speakers");
  c_ceval->add_option("--assignments", ce.assignments)->required()->check(CLI::ExistingFile);
  c_ceval->add_option("--manifest", ce.manifest)->required()->check(CLI::ExistingFile);

  std::string command;
  try {
    app.parse(argc, argv);
    command = app.get_subcommands().front()->get_name();
    g.seed_given = app.count("--seed") > 0;
    g.threads = threads_flag ? *threads_flag : default_threads();

    // Remaining validation happens here, before anything is written.
    if (command == "fbank") {
      fb.cfg.validate();
      if (!(fb.speed > 0.0)) throw UsageError("--speed must be positive");
    } else if (command == "synth") {
      sy.cfg.seed = g.seed;
    } else if (command == "train") {
      TrainConfig& c = tr.config;
      json file = tr.config_path.empty() ? json::object() : read_json_file(tr.config_path);
      const bool custom_arch = file.contains("arch");
      try {
        c = file.get<TrainConfig>();
      } catch (const json::exception& e) {
        throw UsageError(tr.config_path + ": " + e.what());
      }
      if (window_width) c.sampling.window_width = *window_width;
      if (contexts) c.sampling.contexts_per_side = *contexts;
      if (negatives) c.sampling.negatives_k = *negatives;
      if (anchor_hop) c.sampling.anchor_hop = *anchor_hop;
      if (max_steps) c.max_steps = *max_steps;
      if (batch_groups) c.batch_groups = *batch_groups;
      if (epochs) c.epochs = *epochs;
      if (checkpoint_every) c.checkpoint_every = *checkpoint_every;
      if (lr) c.optim.learning_rate = *lr;
      if (g.seed_given || !file.contains("seed")) c.seed = g.seed;
      c.sampling.seed = c.seed;
      c.threads = g.threads;
      if (!custom_arch || c_train->count("--preset"))
        c.arch = preset_arch(preset, c.sampling.window_width, store_bins(tr.features));
      else if (window_width && c.arch.input_width != *window_width)
        throw UsageError("--window-width " + std::to_string(*window_width) + " conflicts with arch.input_width " +
                         std::to_string(c.arch.input_width) + " in " + tr.config_path);
      c.validate();
      g.seed = c.seed;
    } else if (command == "embed") {
      em.opts.head = head == "context" ? Head::kContext : Head::kTarget;
    } else if (command == "cluster") {
      cp.cfg.validate();
    }
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "unspeech: " << e.what() << "\nRun with --help for usage.\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "unspeech: " << e.what() << "\n";
    return 2;
  }

  try {
    json summary;
    if (command == "fbank") summary = run_fbank(fb);
    else if (command == "synth") summary = run_synth(sy);
    else if (command == "train") summary = run_train(tr);
    else if (command == "embed") summary = run_embed(em);
    else if (command == "eer") summary = run_eer(ep);
    else if (command == "cluster") summary = run_cluster(cp);
    else summary = run_cluster_eval(ce);
    emit(std::move(summary), command, g.seed);
    return 0;
  } catch (const std::exception& e) {
    std::cout << json{{"error", e.what()}, {"command", command}, {"seed", g.seed}}.dump() << std::endl;
    return 1;
  }
}
