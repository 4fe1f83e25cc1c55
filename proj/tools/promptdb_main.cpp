// SPDX-License-Identifier: Apache-2.0
//
// promptdb command-line front end: ingest a corpus, annotate it, tag
// unseen-language candidates, register prompts, run the online selection
// cascade, calibrate stage costs, run the synthetic eval harness, or serve
// the whole thing over TCP.
#include <CLI11.hpp>
#include <json.hpp>

#include <atomic>
#include <cmath>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <thread>

#include "promptdb/annotation.hpp"
#include "promptdb/cascade.hpp"
#include "promptdb/eval.hpp"
#include "promptdb/features.hpp"
#include "promptdb/language_tree.hpp"
#include "promptdb/metrics.hpp"
#include "promptdb/registration.hpp"
#include "promptdb/service.hpp"
#include "promptdb/snapshot.hpp"
#include "promptdb/store.hpp"
#include "promptdb/unseen_language.hpp"

namespace {

using namespace promptdb;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;

std::string read_text_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) raise(ErrorCode::IoFailure, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) raise(ErrorCode::IoFailure, "cannot open " + path + " for writing");
  out << text;
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) raise(ErrorCode::IoFailure, "cannot open " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

DatabaseSnapshot load_db(const std::string& dir) {
  if (dir.empty()) {
    raise(ErrorCode::EmptyDatabase, "no database loaded; pass --db <dir>");
  }
  const auto base = std::filesystem::path(dir);
  return open_store((base / "manifest.jsonl").string(), (base / "vectors.bin").string());
}

void save_db(const DatabaseSnapshot& snap, const std::string& dir) {
  std::filesystem::create_directories(dir);
  const auto base = std::filesystem::path(dir);
  save_store(snap, (base / "manifest.jsonl").string(), (base / "vectors.bin").string());
}

/// Plan from --stage kind:percent flags, a JSON file, or the default
/// 4-stage plan. Flags and a file together are rejected.
SelectionPlan load_plan(const std::string& path,
                        const std::vector<std::string>& stage_flags) {
  if (!stage_flags.empty()) {
    if (!path.empty()) {
      raise(ErrorCode::BadInput, "pass either --plan or --stage flags, not both");
    }
    SelectionPlan plan;
    for (const auto& flag : stage_flags) {
      const auto colon = flag.rfind(':');
      if (colon == std::string::npos) {
        raise(ErrorCode::BadInput, "--stage expects kind:percent, got '" + flag + "'");
      }
      SimilarityStage s;
      s.kind = stage_kind_from_string(flag.substr(0, colon));
      s.top_fraction = std::stod(flag.substr(colon + 1)) / 100.0;
      plan.stages.push_back(s);
    }
    plan.validate();
    return plan;
  }
  if (path.empty()) return SelectionPlan::default_plan();
  return SelectionPlan::from_json_text(read_text_file(path));
}

QueryFeatures load_query(const std::string& query_path, const std::string& wav_path) {
  if (!query_path.empty() && !wav_path.empty()) {
    raise(ErrorCode::BadInput, "pass either --query or --wav, not both");
  }
  if (!wav_path.empty()) return features_from_wav(wav_path);
  if (query_path.empty()) raise(ErrorCode::BadInput, "pass --query <file> or --wav <file>");

  const std::string text = read_text_file(query_path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    raise(ErrorCode::BadInput, std::string("query file: ") + e.what());
  }
  QueryFeatures q;
  if (j.contains("speaking_rate")) q.speaking_rate = j["speaking_rate"].get<double>();
  if (j.contains("pitch_mean_hz")) q.pitch_mean_hz = j["pitch_mean_hz"].get<double>();
  auto read_vec = [](const nlohmann::json& v) {
    Vec out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (const auto& x : v) out[i++] = x.get<float>();
    return out;
  };
  if (j.contains("speaker_vec")) q.speaker_vec = read_vec(j["speaker_vec"]);
  if (j.contains("emotion_vec")) q.emotion_vec = read_vec(j["emotion_vec"]);
  if (q.empty()) raise(ErrorCode::BadInput, "query has no features");
  return q;
}

void print_trace(const CascadeResult& result) {
  for (const auto& t : result.stage_trace) {
    std::fprintf(stderr, "stage kind=%s processed=%zu kept=%zu elapsed_us=%.1f\n",
                 to_string(t.kind), t.processed, t.survivors.size(),
                 t.elapsed_s * 1e6);
  }
}

std::atomic<bool> g_shutdown{false};

void handle_signal(int) { g_shutdown.store(true); }

int run(int argc, char** argv) {
  CLI::App app{"prompt database and latency-aware prompt selection engine"};
  app.require_subcommand(1);

  // ingest
  auto* ingest = app.add_subcommand("ingest", "build a snapshot from a manifest");
  std::string ingest_manifest, ingest_vectors, ingest_out;
  ingest->add_option("--manifest", ingest_manifest, "JSON Lines manifest")->required();
  ingest->add_option("--vectors", ingest_vectors,
                     "binary vector store (omit when the manifest inlines vectors)");
  ingest->add_option("--out", ingest_out, "output snapshot directory")->required();

  // annotate
  auto* annotate = app.add_subcommand("annotate", "fuse agent outputs into labels");
  std::string ann_db, ann_kb, ann_outputs, ann_out;
  annotate->add_option("--db", ann_db, "snapshot directory");
  annotate->add_option("--kb", ann_kb, "knowledge base (JSON Lines)")->required();
  annotate->add_option("--outputs", ann_outputs, "agent outputs (JSON Lines)")->required();
  annotate->add_option("--out", ann_out, "write the re-described snapshot here");

  // candidates
  auto* cand = app.add_subcommand("candidates",
                                  "tag candidate prompts for an unseen language");
  std::string cand_db, cand_target, cand_texts, cand_tree, cand_criteria, cand_out,
      cand_oracle = "toy", cand_oracle_file;
  std::uint64_t cand_seed = 0;
  cand->add_option("--db", cand_db, "snapshot directory");
  cand->add_option("--target", cand_target, "unseen language code")->required();
  cand->add_option("--texts", cand_texts, "target-language texts, one per line")
      ->required();
  cand->add_option("--tree", cand_tree, "language tree TSV")->required();
  cand->add_option("--criteria", cand_criteria, "criteria JSON file");
  double cand_lid = -1, cand_max_cer = -1, cand_min_ss = -1, cand_min_es = -1,
         cand_max_srs = -1;
  cand->add_option("--lid-threshold", cand_lid, "LID retention threshold");
  cand->add_option("--max-cer", cand_max_cer, "maximum character error rate");
  cand->add_option("--min-ss", cand_min_ss, "minimum speaker similarity");
  cand->add_option("--min-es", cand_min_es, "minimum emotion similarity");
  cand->add_option("--max-srs", cand_max_srs, "maximum speaking-rate distance");
  cand->add_option("--oracle", cand_oracle, "synthesis oracle: toy | scripted");
  cand->add_option("--oracle-file", cand_oracle_file, "scripted oracle JSON");
  cand->add_option("--seed", cand_seed, "toy oracle seed");
  cand->add_option("--out", cand_out, "write the updated snapshot here");

  // tree-dist
  auto* tdist = app.add_subcommand("tree-dist", "family-tree distance between languages");
  std::string tdist_tree, tdist_a, tdist_b;
  tdist->add_option("--tree", tdist_tree, "language tree TSV")->required();
  tdist->add_option("a", tdist_a, "first language")->required();
  tdist->add_option("b", tdist_b, "second language")->required();

  // register
  auto* reg = app.add_subcommand("register", "build a candidate subset");
  std::string reg_db, reg_request, reg_out;
  int reg_k = 0;
  reg->add_option("--db", reg_db, "snapshot directory");
  reg->add_option("--request", reg_request, "registration request JSON")->required();
  reg->add_option("--k", reg_k, "override subset size");
  reg->add_option("--out", reg_out, "write the subset JSON here (default stdout)");

  // select
  auto* sel = app.add_subcommand("select", "run the online selection cascade");
  std::string sel_db, sel_subset, sel_query, sel_wav, sel_plan;
  double sel_deadline_ms = -1.0;
  sel->add_option("--db", sel_db, "snapshot directory");
  sel->add_option("--subset", sel_subset, "candidate subset JSON")->required();
  sel->add_option("--query", sel_query, "query features JSON");
  sel->add_option("--wav", sel_wav, "extract query features from a WAV file");
  sel->add_option("--plan", sel_plan, "selection plan JSON (default: 4-stage plan)");
  std::vector<std::string> sel_stages;
  sel->add_option("--stage", sel_stages, "stage as kind:percent, repeatable");
  sel->add_option("--deadline-ms", sel_deadline_ms, "interrupt after this budget");

  // calibrate
  auto* cal = app.add_subcommand("calibrate", "measure per-stage scoring costs");
  std::string cal_db, cal_plan, cal_out;
  std::size_t cal_sample_n = 1000;
  cal->add_option("--db", cal_db, "snapshot directory");
  cal->add_option("--plan", cal_plan, "selection plan JSON");
  std::vector<std::string> cal_stages;
  cal->add_option("--stage", cal_stages, "stage as kind:percent, repeatable");
  cal->add_option("--sample-n", cal_sample_n, "records per timing repetition");
  cal->add_option("--out", cal_out, "write the calibrated plan here (default stdout)");

  // eval
  auto* eval = app.add_subcommand("eval", "synthetic-corpus evaluation harness");
  std::size_t eval_records = 400, eval_speakers = 20, eval_queries = 20;
  std::vector<std::uint64_t> eval_seeds{1};
  double eval_noise = 0.25;
  std::string eval_csv;
  bool eval_sweep = false;
  eval->add_option("--records", eval_records, "corpus size");
  eval->add_option("--speakers", eval_speakers, "speaker count");
  eval->add_option("--queries", eval_queries, "queries per seed");
  eval->add_option("--seed", eval_seeds, "corpus seed(s)");
  eval->add_option("--noise", eval_noise, "query vector noise sigma");
  eval->add_option("--csv", eval_csv, "also write machine-readable CSV here");
  eval->add_flag("--sweep", eval_sweep, "include the interruption sweep");

  // serve
  auto* serve = app.add_subcommand("serve", "run the TCP query service");
  std::string serve_db, serve_plan, serve_bind = "127.0.0.1:7077";
  std::size_t serve_sample_n = 1000;
  serve->add_option("--db", serve_db, "snapshot directory");
  serve->add_option("--plan", serve_plan, "selection plan JSON");
  std::vector<std::string> serve_stages;
  serve->add_option("--stage", serve_stages, "stage as kind:percent, repeatable");
  serve->add_option("--bind", serve_bind, "host:port (port 0 = ephemeral)");
  serve->add_option("--calibrate-n", serve_sample_n, "calibration sample size");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  if (ingest->parsed()) {
    DatabaseSnapshot snap = ingest_vectors.empty()
                                ? ingest_inline_manifest(ingest_manifest)
                                : open_store(ingest_manifest, ingest_vectors);
    save_db(snap, ingest_out);
    std::printf("ingested %zu records (dims %d/%d/%d) into %s\n", snap.size(),
                snap.dims.speaker, snap.dims.emotion, snap.dims.face,
                ingest_out.c_str());
    return kExitOk;
  }

  if (annotate->parsed()) {
    DatabaseSnapshot snap = load_db(ann_db);
    const auto kb = load_knowledge_base(ann_kb);
    const auto outputs_by_record = load_agent_outputs(ann_outputs);

    std::vector<PromptRecord> updated;
    for (const auto& record : snap.records) {
      auto it = outputs_by_record.find(record.id);
      if (it == outputs_by_record.end()) {
        if (!ann_out.empty()) updated.push_back(record);
        continue;
      }
      const auto state = state_of_record(record);
      const auto weights = assign_weights(state, kb);

      FusedLabels labels;
      nlohmann::json out;
      out["id"] = record.id;
      const auto& outputs = it->second;
      const auto has_task = [&](Task t) {
        return std::any_of(outputs.begin(), outputs.end(),
                           [&](const AgentOutput& o) { return o.task == t; }) &&
               weights.weights.count(t) > 0;
      };
      PromptRecord next = record;
      if (has_task(Task::gender)) {
        const std::string g = fuse_categorical(outputs, weights, Task::gender);
        out["gender"] = g;
        next.gender = gender_from_string(g);
        if (next.gender != Gender::unknown) labels.gender = next.gender;
      }
      if (has_task(Task::age)) {
        // Fuse in years, then bucket.
        const double years = fuse_numeric(outputs, weights, Task::age);
        const int rounded = std::clamp(static_cast<int>(std::lround(years)), 0, 120);
        out["age_years"] = rounded;
        out["age_group"] = to_string(age_group_of(rounded));
        next.age_years = rounded;
        next.age_group = age_group_of(rounded);
        labels.age_group = next.age_group;
      } else if (record.age_group) {
        labels.age_group = record.age_group;
      }
      if (has_task(Task::emotion)) {
        const std::string e = fuse_categorical(outputs, weights, Task::emotion);
        out["emotion"] = e;
        next.emotion = e;
        labels.emotion = e;
      } else if (!record.emotion.empty()) {
        labels.emotion = record.emotion;
      }
      double rate_for_pace = record.speaking_rate.value_or(0.0);
      if (has_task(Task::speaking_rate)) {
        const double rate = fuse_numeric(outputs, weights, Task::speaking_rate);
        out["speaking_rate"] = rate;
        next.speaking_rate = rate;
        rate_for_pace = rate;
      }
      if (has_task(Task::language)) {
        out["language"] = fuse_categorical(outputs, weights, Task::language);
      }
      if (!labels.gender && record.gender != Gender::unknown) {
        labels.gender = record.gender;
      }
      if (rate_for_pace > 0.0 && snap.rate_cuts) {
        labels.pace = pace_level(rate_for_pace, *snap.rate_cuts);
      }
      if (record.pitch_mean_hz && snap.pitch_cuts) {
        labels.pitch = pitch_level(*record.pitch_mean_hz, *snap.pitch_cuts);
      }
      if (labels.gender || labels.age_group) {
        const std::string description = render_description(labels);
        out["description"] = description;
        next.description = description;
        next.desc_vec.clear();
        for (const auto& tok : tokenize_text(description)) next.desc_vec[tok] += 1.0f;
      }
      std::printf("%s\n", out.dump().c_str());
      if (!ann_out.empty()) updated.push_back(std::move(next));
    }
    if (!ann_out.empty()) {
      save_db(build_snapshot(std::move(updated)), ann_out);
      std::fprintf(stderr, "wrote re-annotated snapshot to %s\n", ann_out.c_str());
    }
    return kExitOk;
  }

  if (cand->parsed()) {
    DatabaseSnapshot snap = load_db(cand_db);
    const LanguageTree tree = LanguageTree::load(cand_tree);
    const std::vector<std::string> texts = read_lines(cand_texts);
    CandidateCriteria criteria;
    if (!cand_criteria.empty()) {
      criteria = CandidateCriteria::from_json_text(read_text_file(cand_criteria));
    }
    if (cand_lid >= 0) criteria.lid_threshold = cand_lid;
    if (cand_max_cer >= 0) criteria.max_cer = cand_max_cer;
    if (cand_min_ss >= 0) criteria.min_ss = cand_min_ss;
    if (cand_min_es >= 0) criteria.min_es = cand_min_es;
    if (cand_max_srs >= 0) criteria.max_srs = cand_max_srs;
    criteria.validate();
    std::unique_ptr<SynthesisOracle> oracle;
    if (cand_oracle == "toy") {
      oracle = std::make_unique<ToySynthesisOracle>(cand_target, cand_seed);
    } else if (cand_oracle == "scripted") {
      if (cand_oracle_file.empty()) {
        raise(ErrorCode::BadInput, "--oracle scripted needs --oracle-file");
      }
      oracle = std::make_unique<ScriptedSynthesisOracle>(
          ScriptedSynthesisOracle::load(cand_oracle_file));
    } else {
      raise(ErrorCode::BadInput, "unknown oracle '" + cand_oracle + "'");
    }

    const auto result =
        annotate_candidates(snap, cand_target, texts, tree, *oracle, criteria);
    nlohmann::json out;
    out["target"] = cand_target;
    out["proxy"] = result.proxy_language;
    out["passing_ids"] = std::vector<std::string>(result.passing_ids.begin(),
                                                  result.passing_ids.end());
    std::printf("%s\n", out.dump().c_str());
    if (!cand_out.empty()) {
      save_db(result.snapshot, cand_out);
      std::fprintf(stderr, "wrote updated snapshot to %s\n", cand_out.c_str());
    }
    return kExitOk;
  }

  if (tdist->parsed()) {
    const LanguageTree tree = LanguageTree::load(tdist_tree);
    std::printf("%d\n", tree.distance(tdist_a, tdist_b));
    return kExitOk;
  }

  if (reg->parsed()) {
    DatabaseSnapshot snap = load_db(reg_db);
    RegistrationRequest request =
        RegistrationRequest::from_json_text(read_text_file(reg_request));
    if (reg_k > 0) request.k = reg_k;
    ToyFaceVoiceOracle oracle(std::max(snap.dims.face, 1), std::max(snap.dims.speaker, 1));
    const CandidateSubset subset = register_request(snap, request, &oracle);
    if (reg_out.empty()) {
      std::printf("%s\n", subset.to_json_text().c_str());
    } else {
      write_text_file(reg_out, subset.to_json_text() + "\n");
      std::fprintf(stderr, "wrote %zu candidates to %s\n", subset.ids.size(),
                   reg_out.c_str());
    }
    return kExitOk;
  }

  if (sel->parsed()) {
    DatabaseSnapshot snap = load_db(sel_db);
    const CandidateSubset subset =
        CandidateSubset::from_json_text(read_text_file(sel_subset));
    const QueryFeatures query = load_query(sel_query, sel_wav);
    const SelectionPlan plan = load_plan(sel_plan, sel_stages);
    std::optional<double> deadline_s;
    if (sel_deadline_ms >= 0.0) deadline_s = sel_deadline_ms / 1000.0;
    const CascadeResult result = run_cascade(plan, subset, snap, query, deadline_s);
    print_trace(result);
    std::printf("%s\n", result.to_json_text().c_str());
    return kExitOk;
  }

  if (cal->parsed()) {
    DatabaseSnapshot snap = load_db(cal_db);
    const SelectionPlan plan =
        calibrate_costs(load_plan(cal_plan, cal_stages), snap, cal_sample_n);
    const std::string text = plan.to_json_text();
    if (cal_out.empty()) {
      std::printf("%s\n", text.c_str());
    } else {
      write_text_file(cal_out, text + "\n");
    }
    for (const auto& s : plan.stages) {
      std::fprintf(stderr, "stage %s: %.3f us/sample\n", to_string(s.kind),
                   *s.cost_per_sample_s * 1e6);
    }
    return kExitOk;
  }

  if (eval->parsed()) {
    std::string csv;
    for (const std::uint64_t seed : eval_seeds) {
      SyntheticCorpusSpec spec;
      spec.n_records = eval_records;
      spec.n_speakers = eval_speakers;
      spec.n_queries = eval_queries;
      spec.query_vec_noise = eval_noise;
      spec.seed = seed;
      const GeneratedCorpus corpus = generate_corpus(spec);
      const SelectionPlan plan = SelectionPlan::default_plan();
      EvalReport report =
          run_eval(corpus.snapshot, corpus.queries, plan,
                   {Strategy::original, Strategy::random_pick, Strategy::proposed});
      if (eval_sweep) {
        std::vector<std::size_t> points(plan.stages.size());
        for (std::size_t i = 0; i < points.size(); ++i) points[i] = i + 1;
        report.sweep =
            sweep_interruption(corpus.snapshot, corpus.queries, plan, points);
      }
      std::printf("seed %llu\n%s\n", static_cast<unsigned long long>(seed),
                  report.to_table().c_str());
      csv += report.to_csv();
    }
    if (!eval_csv.empty()) write_text_file(eval_csv, csv);
    return kExitOk;
  }

  if (serve->parsed()) {
    const auto colon = serve_bind.rfind(':');
    if (colon == std::string::npos) {
      raise(ErrorCode::BadInput, "--bind must be host:port");
    }
    const std::string host = serve_bind.substr(0, colon);
    const int port = std::stoi(serve_bind.substr(colon + 1));
    auto snap = std::make_shared<const DatabaseSnapshot>(load_db(serve_db));

    SelectionPlan plan = load_plan(serve_plan, serve_stages);
    bool calibrated = true;
    for (const auto& s : plan.stages) calibrated = calibrated && s.cost_per_sample_s;
    if (!calibrated) plan = calibrate_costs(plan, *snap, serve_sample_n);

    Service service(snap, plan);
    service.start(host, static_cast<std::uint16_t>(port));
    std::printf("serving %zu records on %s:%u\n", snap->size(), host.c_str(),
                service.port());
    std::fflush(stdout);

    std::signal(SIGINT, handle_signal);
    std::signal(SIGTERM, handle_signal);
    while (!g_shutdown.load()) {
      std::this_thread::sleep_for(std::chrono::milliseconds(100));
    }
    std::fprintf(stderr, "shutting down\n");
    service.stop();
    return kExitOk;
  }

  return kExitUsage;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitData;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitData;
  }
}
