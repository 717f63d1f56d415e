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


#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "test_util.hpp"

namespace unspeech {
namespace {

using testing::TempDir;

struct RunResult {
  int code = -1;
  std::string out;
  std::string err;
};

RunResult run(const std::string& args, const TempDir& dir, const std::string& env = "") {
  const std::string err_file = dir.file("stderr.txt");
  const std::string cmd = "cd '" + dir.path().string() + "' && " + env + " '" + UNSPEECH_CLI + "' " + args + " 2>'" +
                          err_file + "'";
  RunResult r;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (!pipe) return r;
  std::array<char, 4096> buf;
  std::size_t n;
  while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), n);
  const int status = ::pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream e(err_file);
  std::ostringstream ss;
  ss << e.rdbuf();
  r.err = ss.str();
  return r;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

nlohmann::json last_json(const std::string& out) {
  std::istringstream in(out);
  std::string line, last;
  while (std::getline(in, line))
    if (!line.empty()) last = line;
  return nlohmann::json::parse(last);
}

TEST(Cli, HelpHasNoSideEffects) {
  TempDir dir;
  const auto r = run("train --help", dir);
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("--window-width"), std::string::npos);
  EXPECT_EQ(std::distance(std::filesystem::directory_iterator(dir.path()), {}), 1);  // just stderr.txt
}

TEST(Cli, UsageErrorsExitTwo) {
  TempDir dir;
  EXPECT_EQ(run("", dir).code, 2);
  EXPECT_EQ(run("frobnicate", dir).code, 2);
  EXPECT_EQ(run("eer --embeddings x.uemb --manifest m.jsonl --bogus", dir).code, 2);
  EXPECT_EQ(run("synth --out-dir s", dir, "UNSPEECH_THREADS=zero").code, 2);
  EXPECT_FALSE(std::filesystem::exists(dir.file("s")));
}

TEST(Cli, WindowWidthMustMatchPreset) {
  TempDir dir;
  ASSERT_EQ(run("synth --out-dir s --speakers 2 --utterances-per-speaker 2", dir).code, 0);
  const auto r =
      run("train --manifest s/manifest.jsonl --features s/features.ufbk --out-dir run --window-width 48", dir);
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("{32, 64, 128}"), std::string::npos) << r.err;
  EXPECT_FALSE(std::filesystem::exists(dir.file("run")));
}

TEST(Cli, FbankMissingAudioReportsPath) {
  TempDir dir;
  std::ofstream(dir.file("m.jsonl")) << "{\"id\":\"a\",\"path\":\"/no/such/file.wav\"}\n";
  const auto r = run("fbank --manifest m.jsonl --out f.ufbk", dir);
  EXPECT_EQ(r.code, 1);
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_NE(j["error"].get<std::string>().find("/no/such/file.wav"), std::string::npos);
  EXPECT_FALSE(std::filesystem::exists(dir.file("f.ufbk")));
  EXPECT_FALSE(std::filesystem::exists(dir.file("f.ufbk.partial")));
}

TEST(Cli, FbankMatchesLibrary) {
  TempDir dir;
  save_wav(dir.file("a.wav"), testing::sine(440.0, 8000));
  save_wav(dir.file("b.wav"), testing::sine(1500.0, 5000));
  std::ofstream(dir.file("m.jsonl")) << "{\"id\":\"a\",\"path\":\"a.wav\"}\n{\"id\":\"b\",\"path\":\"b.wav\"}\n";
  const auto r = run("fbank --manifest m.jsonl --out f.ufbk --seed 7", dir);
  ASSERT_EQ(r.code, 0) << r.out << r.err;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j["seed"], 7);
  EXPECT_EQ(j["utterances"], 2);
  const auto store = read_feature_store(dir.file("f.ufbk"));
  ASSERT_EQ(store.size(), 2u);
  EXPECT_EQ(store[1].values, compute_fbank(load_wav(dir.file("b.wav")), FbankConfig{}, "b").values);
}

TEST(Cli, PipelineIsReproducibleAndLeavesInputsAlone) {
  TempDir dir;
  ASSERT_EQ(run("synth --out-dir s --speakers 3 --utterances-per-speaker 4 --seed 5", dir).code, 0);
  const auto manifest_before = slurp(dir.file("s/manifest.jsonl"));
  const auto features_before = slurp(dir.file("s/features.ufbk"));
  std::ofstream(dir.file("cfg.json")) << R"({"batch_groups": 2, "arch": {"input_width": 32, "input_bins": 40,
    "conv_stages": [{"layers": 1, "channels": 2}], "fc_widths": [8, 6]}, "sampling": {"window_width": 32}})";
  for (const char* out : {"r1", "r2"}) {
    const auto r = run(std::string("train --manifest s/manifest.jsonl --features s/features.ufbk --config cfg.json "
                                   "--max-steps 6 --checkpoint-every 3 --seed 9 --out-dir ") +
                           out,
                       dir);
    ASSERT_EQ(r.code, 0) << r.out << r.err;
    EXPECT_EQ(last_json(r.out)["seed"], 9);
    EXPECT_EQ(last_json(r.out)["steps"], 6);
    const auto e = run(std::string("embed --checkpoint ") + out + "/model.uckp --features s/features.ufbk "
                           "--manifest s/manifest.jsonl --stride 7 --out " + out + "/e.uemb",
                       dir);
    ASSERT_EQ(e.code, 0) << e.out << e.err;
  }
  for (const char* f : {"model.uckp", "step-00000003.uckp", "train_log.jsonl", "e.uemb", "config.json"})
    EXPECT_EQ(slurp(dir.file(std::string("r1/") + f)), slurp(dir.file(std::string("r2/") + f))) << f;
  EXPECT_EQ(slurp(dir.file("s/manifest.jsonl")), manifest_before);
  EXPECT_EQ(slurp(dir.file("s/features.ufbk")), features_before);

  const auto eer = run("eer --embeddings r1/e.uemb --manifest s/manifest.jsonl", dir);
  ASSERT_EQ(eer.code, 0) << eer.out;
  const auto ej = nlohmann::json::parse(eer.out);
  EXPECT_EQ(ej["trials"], 66);
  EXPECT_GE(ej["eer"].get<double>(), 0.0);

  const auto cl = run("cluster --embeddings r1/e.uemb --min-cluster-size 2 --min-samples 2 --out a.jsonl", dir);
  ASSERT_EQ(cl.code, 0) << cl.out;
  const auto ce = run("cluster-eval --assignments a.jsonl --manifest s/manifest.jsonl", dir);
  ASSERT_EQ(ce.code, 0) << ce.out;
  const auto cj = nlohmann::json::parse(ce.out);
  for (const char* key : {"num_clusters", "outliers", "ari", "ari_excluding_outliers", "nmi"})
    EXPECT_TRUE(cj.contains(key)) << key;
}

TEST(Cli, ResumeContinuesTheRun) {
  TempDir dir;
  ASSERT_EQ(run("synth --out-dir s --speakers 2 --utterances-per-speaker 3", dir).code, 0);
  std::ofstream(dir.file("cfg.json")) << R"({"batch_groups": 2, "arch": {"input_width": 32, "input_bins": 40,
    "conv_stages": [{"layers": 1, "channels": 2}], "fc_widths": [8, 6]}, "sampling": {"window_width": 32}})";
  const std::string common = "train --manifest s/manifest.jsonl --features s/features.ufbk --config cfg.json ";
  ASSERT_EQ(run(common + "--max-steps 8 --out-dir full", dir).code, 0);
  ASSERT_EQ(run(common + "--max-steps 4 --out-dir half", dir).code, 0);
  const auto r = run(common + "--max-steps 8 --out-dir half --resume half/model.uckp", dir);
  ASSERT_EQ(r.code, 0) << r.out << r.err;
  EXPECT_EQ(slurp(dir.file("full/model.uckp")), slurp(dir.file("half/model.uckp")));
}

TEST(Cli, EerOfSeparatedEmbeddingsIsZero) {
  TempDir dir;
  EmbeddingStore s;
  s.dim = 2;
  std::ofstream m(dir.file("m.jsonl"));
  for (int i = 0; i < 6; ++i) {
    const float side = i < 3 ? 1.0f : -1.0f;
    s.add("u" + std::to_string(i), {side, 0.01f * i});
    m << nlohmann::json{{"id", "u" + std::to_string(i)}, {"path", "x"}, {"speaker", i < 3 ? "a" : "b"}}.dump()
      << "\n";
  }
  m.close();
  write_embeddings(s, dir.file("e.uemb"));
  const auto r = run("eer --embeddings e.uemb --manifest m.jsonl --seed 4", dir);
  ASSERT_EQ(r.code, 0) << r.out;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j["eer"], 0.0);
  EXPECT_EQ(j["seed"], 4);
}

TEST(Cli, ClusterEvalOfIdenticalPartitions) {
  TempDir dir;
  std::ofstream m(dir.file("m.jsonl")), a(dir.file("a.jsonl"));
  for (int i = 0; i < 8; ++i) {
    m << nlohmann::json{{"id", "u" + std::to_string(i)}, {"path", "x"}, {"speaker", "s" + std::to_string(i % 3)}}
             .dump()
      << "\n";
    a << nlohmann::json{{"id", "u" + std::to_string(i)}, {"cluster", i % 3}}.dump() << "\n";
  }
  m.close();
  a.close();
  const auto r = run("cluster-eval --assignments a.jsonl --manifest m.jsonl", dir);
  ASSERT_EQ(r.code, 0) << r.out;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j["ari"], 1.0);
  EXPECT_EQ(j["nmi"], 1.0);
  EXPECT_EQ(j["num_clusters"], 3);
  EXPECT_EQ(j["outliers"], 0);
}

}  // namespace
}  // namespace unspeech
