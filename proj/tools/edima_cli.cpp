// edima: command-line front end for the detection pipeline.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include "edima/constructor.hpp"
#include "edima/error.hpp"
#include "edima/featuredb.hpp"
#include "edima/pipeline.hpp"
#include "edima/policy.hpp"
#include "edima/rng.hpp"
#include "edima/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace edima::cli {
namespace {

const std::map<std::string, Category> kCategoryMap = {
    {"telnet", Category::Telnet}, {"http-post", Category::HttpPost}, {"http-get", Category::HttpGet}};
const std::map<std::string, Algorithm> kAlgoMap = {
    {"gnb", Algorithm::Gnb}, {"knn", Algorithm::Knn}, {"rf", Algorithm::Rf}};
const std::map<std::string, Label> kLabelMap = {{"benign", Label::Benign},
                                                {"malicious", Label::Malicious}};

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& seed) {
  if (seed) return *seed;
  std::random_device rd;
  const std::uint64_t s = (std::uint64_t{rd()} << 32) | rd();
  std::cerr << "edima: no --seed given, using " << s << "\n";
  return s;
}

std::int64_t window_micros(double secs) {
  if (!(secs > 0.0)) throw Error(ErrorCode::InvalidHyperparams, "--window-secs must be positive");
  return static_cast<std::int64_t>(std::llround(secs * 1e6));
}

void write_text(const fs::path& path, const std::string& body) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << body;
}

std::string jsonl(const std::vector<json>& rows) {
  std::string out;
  for (const auto& r : rows) out += r.dump() + "\n";
  return out;
}

// Files, directories (their *.pcap, sorted) and @list files.
std::vector<fs::path> expand_inputs(const std::vector<std::string>& args) {
  std::vector<fs::path> out;
  for (const auto& a : args) {
    if (!a.empty() && a[0] == '@') {
      std::ifstream in(a.substr(1));
      if (!in) throw Error(ErrorCode::Io, "cannot read list " + a.substr(1));
      for (std::string line; std::getline(in, line);)
        if (!line.empty()) out.emplace_back(line);
    } else if (fs::is_directory(a)) {
      std::vector<fs::path> found;
      for (const auto& e : fs::directory_iterator(a))
        if (e.path().extension() == ".pcap") found.push_back(e.path());
      std::sort(found.begin(), found.end());
      out.insert(out.end(), found.begin(), found.end());
    } else {
      out.emplace_back(a);
    }
  }
  return out;
}

// file name -> label, from one or more labels.jsonl files
std::map<std::string, CorpusEntry> load_label_map(const std::vector<fs::path>& files) {
  std::map<std::string, CorpusEntry> out;
  for (const auto& f : files)
    for (const auto& e : read_labels(f)) out[fs::path(e.file).filename().string()] = e;
  return out;
}

std::string pct(double x) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << x * 100 << "%";
  return os.str();
}

std::string fixed2(double x) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << x;
  return os.str();
}

void print_score_table(std::ostream& os, const std::vector<std::pair<std::string, Metrics>>& rows) {
  os << std::left << std::setw(12) << "model" << std::setw(11) << "accuracy" << std::setw(11)
     << "precision" << std::setw(8) << "recall" << std::setw(6) << "f1"
     << "confusion (tp/fp/fn/tn)\n";
  for (const auto& [name, m] : rows) {
    os << std::left << std::setw(12) << name << std::setw(11) << pct(m.accuracy) << std::setw(11)
       << fixed2(m.precision) << std::setw(8) << fixed2(m.recall) << std::setw(6) << fixed2(m.f1)
       << m.tp << "/" << m.fp << "/" << m.fn << "/" << m.tn << "\n";
  }
}

// ---------------------------------------------------------------------------

struct SynthArgs {
  std::string category = "telnet";
  std::size_t n_benign = 30;
  std::size_t n_malicious = 30;
  double duration = 900;
  std::optional<std::uint64_t> seed;
  std::string config;
  std::string out = "corpus";
  unsigned workers = 0;
};

int run_synth(const SynthArgs& a) {
  CorpusProfiles profiles;
  if (!a.config.empty()) {
    std::ifstream in(a.config);
    if (!in) throw Error(ErrorCode::Io, "cannot read " + a.config);
    try {
      profiles = profiles_from_json(json::parse(in));
    } catch (const json::parse_error& e) {
      throw Error(ErrorCode::InvalidProfile, a.config + ": " + e.what());
    }
  }
  const auto seed = resolve_seed(a.seed);
  const unsigned workers = a.workers ? a.workers : std::max(1u, std::thread::hardware_concurrency());
  const auto entries = build_corpus(a.n_benign, a.n_malicious, kCategoryMap.at(a.category),
                                    profiles, a.duration, seed, a.out, workers);
  std::cout << "wrote " << entries.size() << " sessions to " << a.out << " (seed " << seed
            << ")\n";
  return 0;
}

struct IngestArgs {
  std::string category = "telnet";
  std::string db = "features.jsonl";
  std::vector<std::string> labels;
  std::string label;
  double window_secs = 900;
  std::vector<std::string> inputs;
};

int run_ingest(const IngestArgs& a) {
  const auto category = kCategoryMap.at(a.category);
  const auto files = expand_inputs(a.inputs);
  std::vector<fs::path> label_files(a.labels.begin(), a.labels.end());
  if (label_files.empty() && a.label.empty()) {
    std::set<fs::path> dirs;
    for (const auto& f : files) dirs.insert(f.parent_path() / "labels.jsonl");
    for (const auto& d : dirs)
      if (fs::exists(d)) label_files.push_back(d);
  }
  const auto label_map = load_label_map(label_files);

  PipelineOptions opts;
  opts.category = category;
  opts.window_micros = window_micros(a.window_secs);
  const auto now = iso8601_now();
  std::vector<SampleRecord> batch;
  for (const auto& f : files) {
    Label label;
    if (!a.label.empty()) {
      label = kLabelMap.at(a.label);
    } else {
      const auto it = label_map.find(f.filename().string());
      if (it == label_map.end())
        throw Error(ErrorCode::MalformedRow, "no label for " + f.string() + " (use --labels or --label)");
      if (it->second.category != category)
        throw Error(ErrorCode::CategoryMismatch, f.string() + " was generated for " +
                                                     std::string(to_string(it->second.category)));
      label = it->second.label;
    }
    for (auto& fv : extract_file_features(input_for(f), opts)) {
      fv.label = label;
      SampleRecord r;
      r.id = default_sample_id(fv);
      r.fv = std::move(fv);
      r.source = f.string();
      r.added_at = now;
      batch.push_back(std::move(r));
    }
  }
  auto db = FeatureDb::open(a.db);
  const auto n = db.insert(batch);
  std::cout << "inserted " << n << " rows into " << a.db << " (" << db.size() << " total)\n";
  return 0;
}

struct TrainArgs {
  std::string category = "telnet";
  std::string db = "features.jsonl";
  std::string algo = "knn";
  int k = 5;
  int trees = 100;
  double split = 0.7;
  double min_gain = kDefaultMinGain;
  std::optional<std::uint64_t> seed;
  std::string out = "registry";
};

int run_train(const TrainArgs& a) {
  const auto category = kCategoryMap.at(a.category);
  const auto algo = kAlgoMap.at(a.algo);
  const auto seed = resolve_seed(a.seed);
  const auto db = FeatureDb::open(a.db);
  const auto records = db.query(category);
  if (records.empty())
    throw Error(ErrorCode::EmptyDataset, "no " + a.category + " rows in " + a.db);

  ModelRegistryEntry fresh;
  fresh.category = category;
  auto registry = load_registry(a.out, category).value_or(fresh);
  Dataset train_rows, test_rows;
  std::vector<std::string> test_sources;
  if (registry.holdout_ids.empty()) {
    Dataset all;
    std::map<std::string, const SampleRecord*> by_key;
    for (const auto& r : records) {
      all.push_back(r.fv);
      // gateway + window identifies a row inside one category
      by_key[r.fv.gateway + "@" + std::to_string(r.fv.window_start_us)] = &r;
    }
    auto parts = split(all, {.train_fraction = a.split, .seed = seed});
    train_rows = std::move(parts.train);
    test_rows = std::move(parts.test);
    for (const auto& fv : test_rows) {
      const auto* rec = by_key.at(fv.gateway + "@" + std::to_string(fv.window_start_us));
      registry.holdout_ids.push_back(rec->id);
    }
  } else {
    const std::set<std::string> held(registry.holdout_ids.begin(), registry.holdout_ids.end());
    for (const auto& r : records) (held.count(r.id) ? test_rows : train_rows).push_back(r.fv);
    if (test_rows.empty())
      throw Error(ErrorCode::TooFewRows, "stored holdout rows are missing from " + a.db);
  }
  const std::set<std::string> held(registry.holdout_ids.begin(), registry.holdout_ids.end());
  std::set<std::string> sources;
  for (const auto& r : records)
    if (held.count(r.id) && sources.insert(r.source).second) test_sources.push_back(r.source);

  const Hyperparams hp{.k = a.k, .trees = a.trees};
  auto result = fit_and_evaluate(algo, train_rows, test_rows, hp, seed);
  const auto stamp = iso8601_now();
  result.model.meta.trained_at = stamp;
  const auto decision = compare_and_promote(registry, result.model, result.metrics, a.min_gain, stamp);
  save_registry(a.out, registry);

  const auto dir = registry_dir(a.out, category);
  save_model(dir / ("candidate-" + a.algo + ".model"), result.model);
  std::string list;
  for (const auto& s : test_sources) list += s + "\n";
  write_text(dir / "holdout.txt", list);

  std::cout << "trained " << a.algo << " on " << train_rows.size() << " rows, scored on "
            << test_rows.size() << " held-out rows (seed " << seed << ")\n";
  print_score_table(std::cout, {{a.algo, result.metrics}});
  std::cout << "decision: " << to_string(decision) << " (digest " << model_digest(result.model)
            << ", active accuracy " << pct(registry.active_metrics.accuracy) << ")\n";
  return 0;
}

struct EvaluateArgs {
  std::string category = "telnet";
  std::string db = "features.jsonl";
  std::string registry = "registry";
  std::vector<std::string> models;
};

int run_evaluate(const EvaluateArgs& a) {
  const auto category = kCategoryMap.at(a.category);
  const auto db = FeatureDb::open(a.db);
  const auto reg = load_registry(a.registry, category);
  std::set<std::string> held;
  if (reg) held.insert(reg->holdout_ids.begin(), reg->holdout_ids.end());
  Dataset rows;
  for (const auto& r : db.query(category))
    if (held.empty() || held.count(r.id)) rows.push_back(r.fv);
  if (rows.empty()) throw Error(ErrorCode::EmptyInput, "no rows to evaluate");

  std::vector<fs::path> paths(a.models.begin(), a.models.end());
  if (paths.empty()) {
    const auto dir = registry_dir(a.registry, category);
    for (const char* name : {"active.model", "candidate-gnb.model", "candidate-knn.model",
                             "candidate-rf.model"})
      if (fs::exists(dir / name)) paths.push_back(dir / name);
  }
  if (paths.empty()) throw Error(ErrorCode::Io, "no models found; pass --model");

  std::vector<std::pair<std::string, Metrics>> table;
  for (const auto& p : paths) {
    const auto model = load_model(p);
    std::string name(to_string(model.algorithm));
    if (p.filename() == "active.model") name += "*";
    table.emplace_back(name, evaluate_model(model, rows));
  }
  std::cout << a.category << ": " << rows.size() << (held.empty() ? " rows" : " held-out rows")
            << "\n";
  print_score_table(std::cout, table);
  return 0;
}

struct ClassifyArgs {
  std::string category = "telnet";
  std::string model;
  std::string registry = "registry";
  std::string rules;
  std::vector<std::string> labels;
  double window_secs = 900;
  unsigned workers = 0;
  std::optional<double> subsample;
  std::optional<std::uint64_t> seed;
  std::string out = "run";
  std::vector<std::string> inputs;
};

int run_classify(const ClassifyArgs& a) {
  const auto category = kCategoryMap.at(a.category);
  const fs::path model_path =
      a.model.empty() ? registry_dir(a.registry, category) / "active.model" : fs::path(a.model);
  const auto model = load_model(model_path);
  const auto rules = a.rules.empty() ? std::vector<PolicyRule>{} : load_rules(a.rules);

  PipelineOptions opts;
  opts.category = category;
  opts.window_micros = window_micros(a.window_secs);
  opts.workers = a.workers ? a.workers : std::max(1u, std::thread::hardware_concurrency());
  if (a.subsample) {
    opts.subsample_p = a.subsample;
    opts.subsample_seed = resolve_seed(a.seed);
  }

  std::vector<PipelineInput> inputs;
  for (const auto& f : expand_inputs(a.inputs)) inputs.push_back(input_for(f));

  std::map<std::string, Label> truth;
  if (!a.labels.empty()) {
    std::vector<fs::path> lf(a.labels.begin(), a.labels.end());
    for (const auto& [file, e] : load_label_map(lf)) truth[fs::path(file).stem().string()] = e.label;
  }
  const auto started = iso8601_now();
  const auto report = run_pipeline(inputs, model, rules, opts, a.labels.empty() ? nullptr : &truth);

  std::vector<json> verdicts, actions;
  for (const auto& s : report.sessions) {
    auto v = to_json(s.verdict);
    v["source"] = s.source;
    v["features"] = to_json(s.features);
    verdicts.push_back(std::move(v));
    actions.push_back(to_json(s.action));
  }
  const fs::path out(a.out);
  write_text(out / "verdicts.jsonl", jsonl(verdicts));
  write_text(out / "actions.jsonl", jsonl(actions));

  json rep;
  rep["category"] = a.category;
  rep["model_digest"] = model_digest(model);
  rep["algorithm"] = to_string(model.algorithm);
  rep["sessions"] = report.sessions.size();
  rep["skipped_frames"] = report.skipped_frames;
  rep["window_secs"] = a.window_secs;
  std::map<std::string, std::size_t> per_action;
  for (const auto& s : report.sessions) ++per_action[std::string(to_string(s.action.action))];
  rep["actions"] = per_action;
  rep["metrics"] = report.metrics ? to_json(*report.metrics) : json(nullptr);
  write_text(out / "report.json", rep.dump(2) + "\n");

  json meta;
  meta["started_at"] = started;
  meta["finished_at"] = iso8601_now();
  meta["elapsed_s"] = report.elapsed_s;
  meta["sessions_per_second"] = report.sessions_per_second;
  meta["workers"] = opts.workers;
  write_text(out / "meta.json", meta.dump(2) + "\n");

  std::cout << "classified " << report.sessions.size() << " sessions from " << inputs.size()
            << " files -> " << out.string() << "\n";
  if (report.metrics) print_score_table(std::cout, {{std::string(to_string(model.algorithm)), *report.metrics}});
  return 0;
}

struct DbArgs {
  std::string db = "features.jsonl";
  std::string file;
  std::string category;
  std::string label;
  std::optional<std::size_t> limit;
  bool summary = false;
};

void print_summary(const std::vector<SampleRecord>& rows) {
  // per (category, label): count and min / mean / max of each feature
  std::map<std::pair<std::string, std::string>, std::vector<FeatureRow>> groups;
  for (const auto& r : rows)
    groups[{std::string(to_string(r.fv.category)), std::string(to_string(*r.fv.label))}].push_back(
        r.fv.values());
  std::cout << std::left << std::setw(11) << "category" << std::setw(11) << "label"
            << std::setw(7) << "rows" << "feature  min / mean / max\n";
  for (const auto& [key, vals] : groups) {
    for (std::size_t f = 0; f < kNumFeatures; ++f) {
      double lo = vals[0][f], hi = vals[0][f], sum = 0;
      for (const auto& v : vals) {
        lo = std::min(lo, v[f]);
        hi = std::max(hi, v[f]);
        sum += v[f];
      }
      if (f == 0)
        std::cout << std::setw(11) << key.first << std::setw(11) << key.second << std::setw(7)
                  << vals.size();
      else
        std::cout << std::setw(29) << "";
      std::cout << "f" << f + 1 << "       " << fixed2(lo) << " / " << fixed2(sum / vals.size())
                << " / " << fixed2(hi) << "\n";
    }
  }
}

int run_db(const std::string& verb, const DbArgs& a) {
  auto db = FeatureDb::open(a.db);
  if (verb == "import") {
    std::cout << "imported " << db.import_from(a.file) << " rows into " << a.db << "\n";
  } else if (verb == "export") {
    db.export_to(a.file);
    std::cout << "exported " << db.size() << " rows to " << a.file << "\n";
  } else {
    std::optional<Category> cat;
    std::optional<Label> label;
    if (!a.category.empty()) cat = kCategoryMap.at(a.category);
    if (!a.label.empty()) label = kLabelMap.at(a.label);
    const auto rows = db.query(cat, label, a.limit);
    if (a.summary) {
      if (rows.empty()) std::cout << "no rows\n";
      else print_summary(rows);
    } else {
      for (const auto& r : rows) std::cout << to_json(r).dump() << "\n";
    }
  }
  return 0;
}

struct PolicyArgs {
  std::string rules;
  std::string verdicts;
  double window_secs = 900;
};

int run_policy_check(const PolicyArgs& a) {
  const auto rules = load_rules(a.rules);
  std::cout << a.rules << ": " << rules.size() << " rule(s) ok\n";
  for (std::size_t i = 0; i < rules.size(); ++i)
    std::cout << "  [" << i << "] " << to_json(rules[i]).dump() << "\n";
  if (a.verdicts.empty()) return 0;
  const auto window = window_micros(a.window_secs);
  std::ifstream in(a.verdicts);
  if (!in) throw Error(ErrorCode::Io, "cannot read " + a.verdicts);
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (line.empty()) continue;
    Verdict v;
    try {
      v = verdict_from_json(json::parse(line));
    } catch (const json::exception& e) {
      throw RowError(ErrorCode::MalformedRow, line_no, e.what());
    }
    std::cout << to_json(evaluate(rules, v, v.window_start_micros + window)).dump() << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"edima: gateway-level malware traffic detection"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "edima 0.1.0");

  auto category_opt = [](CLI::App* sub, std::string& target) {
    sub->add_option("--category", target, "malware category")
        ->transform(CLI::IsMember(kCategoryMap, CLI::ignore_case))
        ->capture_default_str();
  };

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "generate a labeled pcap corpus");
  category_opt(s, synth.category);
  s->add_option("--n-benign", synth.n_benign)->capture_default_str();
  s->add_option("--n-malicious", synth.n_malicious)->capture_default_str();
  s->add_option("--duration-secs", synth.duration)->capture_default_str();
  s->add_option("--seed", synth.seed);
  s->add_option("--config", synth.config, "JSON profile overrides")->check(CLI::ExistingFile);
  s->add_option("--out", synth.out, "output directory")->capture_default_str();
  s->add_option("--workers", synth.workers);

  IngestArgs ingest;
  auto* in = app.add_subcommand("ingest", "extract labeled feature rows into the store");
  category_opt(in, ingest.category);
  in->add_option("--db", ingest.db)->capture_default_str();
  in->add_option("--labels", ingest.labels, "labels.jsonl (default: next to each pcap)");
  in->add_option("--label", ingest.label, "label every input")
      ->check(CLI::IsMember({"benign", "malicious"}));
  in->add_option("--window-secs", ingest.window_secs)->capture_default_str();
  in->add_option("inputs", ingest.inputs, "pcap files, directories or @list")->required();

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "train a candidate and update the registry");
  category_opt(t, tr.category);
  t->add_option("--db", tr.db)->capture_default_str();
  t->add_option("--algo", tr.algo)->check(CLI::IsMember({"gnb", "knn", "rf"}))->capture_default_str();
  t->add_option("--k", tr.k)->capture_default_str();
  t->add_option("--trees", tr.trees)->capture_default_str();
  t->add_option("--split", tr.split, "train fraction")->capture_default_str();
  t->add_option("--min-gain", tr.min_gain)->capture_default_str();
  t->add_option("--seed", tr.seed);
  t->add_option("--out", tr.out, "registry root")->capture_default_str();

  EvaluateArgs ev;
  auto* e = app.add_subcommand("evaluate", "score models on the held-out rows");
  category_opt(e, ev.category);
  e->add_option("--db", ev.db)->capture_default_str();
  e->add_option("--registry", ev.registry)->capture_default_str();
  e->add_option("--model", ev.models, "model files (default: registry contents)");

  ClassifyArgs cl;
  auto* c = app.add_subcommand("classify", "classify pcaps and apply policy rules");
  category_opt(c, cl.category);
  c->add_option("--model", cl.model, "model file (default: registry active model)");
  c->add_option("--registry", cl.registry)->capture_default_str();
  c->add_option("--rules", cl.rules)->check(CLI::ExistingFile);
  c->add_option("--labels", cl.labels, "labels.jsonl for scoring");
  c->add_option("--window-secs", cl.window_secs)->capture_default_str();
  c->add_option("--workers", cl.workers);
  c->add_option("--subsample", cl.subsample, "keep each packet with this probability");
  c->add_option("--seed", cl.seed);
  c->add_option("--out", cl.out, "output directory")->capture_default_str();
  c->add_option("inputs", cl.inputs, "pcap files, directories or @list");

  DbArgs dbargs;
  std::string db_verb;
  auto* d = app.add_subcommand("db", "feature store maintenance");
  d->require_subcommand(1);
  for (const char* verb : {"import", "export", "query"}) {
    auto* sub = d->add_subcommand(verb);
    sub->add_option("--db", dbargs.db)->capture_default_str();
    if (std::string(verb) != "query") {
      sub->add_option("file", dbargs.file)->required();
    } else {
      sub->add_option("--category", dbargs.category)
          ->check(CLI::IsMember({"telnet", "http-post", "http-get"}));
      sub->add_option("--label", dbargs.label)->check(CLI::IsMember({"benign", "malicious"}));
      sub->add_option("--limit", dbargs.limit);
      sub->add_flag("--summary", dbargs.summary, "feature distributions per class");
    }
    sub->callback([&db_verb, verb] { db_verb = verb; });
  }

  PolicyArgs pol;
  auto* p = app.add_subcommand("policy", "policy rule tools");
  p->require_subcommand(1);
  auto* pc = p->add_subcommand("check", "validate rules, optionally apply them to verdicts");
  pc->add_option("--rules", pol.rules)->required();
  pc->add_option("--verdicts", pol.verdicts, "verdicts.jsonl to evaluate");
  pc->add_option("--window-secs", pol.window_secs, "session length behind the verdicts")
      ->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (s->parsed()) return run_synth(synth);
    if (in->parsed()) return run_ingest(ingest);
    if (t->parsed()) return run_train(tr);
    if (e->parsed()) return run_evaluate(ev);
    if (c->parsed()) return run_classify(cl);
    if (d->parsed()) return run_db(db_verb, dbargs);
    if (pc->parsed()) return run_policy_check(pol);
  } catch (const RowError& err) {
    std::cerr << "edima: line " << err.line() << ": " << err.what() << "\n";
    return 1;
  } catch (const Error& err) {
    std::cerr << "edima: " << err.what() << "\n";
    return 1;
  } catch (const std::exception& err) {
    std::cerr << "edima: " << err.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace edima::cli

int main(int argc, char** argv) { return edima::cli::main(argc, argv); }
