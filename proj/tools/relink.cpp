#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <omp.h>

#include <CLI11.hpp>
#include <json.hpp>

#include "relink/dataset.hpp"
#include "relink/ed_model.hpp"
#include "relink/error.hpp"
#include "relink/evaluation.hpp"
#include "relink/index_builder.hpp"
#include "relink/mention.hpp"
#include "relink/pipeline.hpp"
#include "relink/service.hpp"
#include "relink/store.hpp"
#include "relink/synthetic.hpp"
#include "relink/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace relink;

namespace {

std::vector<std::string> split_commas(const std::vector<std::string>& values) {
  std::vector<std::string> out;
  for (const auto& v : values) {
    std::stringstream ss(v);
    for (std::string item; std::getline(ss, item, ',');) {
      if (!item.empty()) out.push_back(item);
    }
  }
  return out;
}

void require_file(const fs::path& p, const std::string& what) {
  if (!fs::exists(p)) throw Error(ErrorCode::FileNotFound, what + " not found: " + p.string());
}

// Writes to --out when given, standard output otherwise.
class Output {
 public:
  explicit Output(const std::string& path) {
    if (!path.empty()) {
      file_.open(path);
      if (!file_) throw Error(ErrorCode::Io, "cannot write " + path);
    }
  }
  std::ostream& stream() { return file_.is_open() ? static_cast<std::ostream&>(file_) : std::cout; }

 private:
  std::ofstream file_;
};

void set_jobs(int jobs) {
  if (jobs > 0) omp_set_num_threads(jobs);
}

json annotation_json(const Annotation& a) {
  return json::array({a.start, a.length, a.surface, a.entity, a.ed_confidence, a.md_confidence ? json(*a.md_confidence) : json(nullptr),
                      a.tag ? json(*a.tag) : json(nullptr)});
}

std::vector<LabeledDocument> read_documents(const fs::path& path) {
  require_file(path, "document file");
  if (path.extension() == ".tsv" || path.extension() == ".conll") return read_aida_tsv(path);
  return read_jsonl_documents(path);
}

std::vector<Span> spans_of(const LabeledDocument& doc) {
  std::vector<Span> spans;
  for (const auto& m : doc.mentions) spans.push_back(Span{m.start, m.length, std::nullopt, std::nullopt});
  return spans;
}

struct BuildArgs {
  std::vector<std::string> anchors;
  std::vector<std::string> dicts;
  std::string redirects;
  std::vector<std::string> embeddings;
  std::string entity_prefix{kDefaultEntityPrefix};
  std::string out;
  bool case_sensitive = false;
  std::size_t max_candidates = kMaxCandidatesStored;
};

int cmd_build_index(const BuildArgs& a) {
  RedirectTable redirects;
  if (!a.redirects.empty()) {
    require_file(a.redirects, "redirect file");
    redirects = read_redirects(fs::path(a.redirects));
  }
  for (const auto& c : redirects.cycles()) std::cerr << "warning: redirect cycle through '" << c << "' left unresolved\n";

  AnchorParseOptions opts{a.case_sensitive};
  std::vector<fs::path> anchor_paths;
  for (const auto& p : split_commas(a.anchors)) {
    require_file(p, "anchor corpus");
    anchor_paths.emplace_back(p);
  }
  AnchorCounts counts = parse_anchor_corpora(anchor_paths, redirects, opts);
  if (counts.warnings) std::cerr << "warning: skipped " << counts.warnings << " malformed anchors\n";

  UniformDict dict;
  for (const auto& p : split_commas(a.dicts)) {
    require_file(p, "dictionary");
    read_uniform_dict(fs::path(p), redirects, dict, opts);
  }

  auto emb_files = split_commas(a.embeddings);
  if (emb_files.empty() || emb_files.size() > 2) throw Error(ErrorCode::InvalidArgument, "--embeddings takes one or two files");
  for (const auto& p : emb_files) require_file(p, "embedding file");
  IngestOptions ingest;
  ingest.entity_prefix = a.entity_prefix;
  EmbeddingPair emb = ingest_embeddings(emb_files[0], emb_files.size() == 2 ? fs::path(emb_files[1]) : fs::path(), ingest);

  TitledPriors priors = combine_priors(compute_wiki_prior(counts), dict, a.max_candidates);
  BuildReport r = build_store(std::move(emb), priors, a.out, a.case_sensitive);
  std::cerr << "dropped " << r.dropped_entities << " entities without embeddings (" << r.dropped_entries << " prior entries)\n";
  json summary = {{"store", a.out},         {"surfaces", r.surfaces}, {"entries", r.entries},
                  {"words", r.words},       {"entities", r.entities}, {"dropped_entities", r.dropped_entities},
                  {"dropped_entries", r.dropped_entries}};
  std::cout << summary.dump() << '\n';
  return 0;
}

struct TrainArgs {
  std::string store;
  std::string train;
  std::string val;
  std::string out;
  std::string synthetic_dir;
  bool synthetic = false;
  std::uint64_t seed = 0;
  TrainConfig config;
  EDHyperParams hyper;
  SelectionParams selection;
  std::size_t patience = 0;
  int jobs = 0;
};

json history_json(const TrainResult& r) {
  json epochs = json::array();
  for (const auto& e : r.history) {
    epochs.push_back({{"epoch", e.epoch},
                      {"train_loss", e.train_loss},
                      {"val_micro_f1", e.val_micro_f1},
                      {"lr", e.lr},
                      {"lr_switched", e.lr_switched},
                      {"steps", e.steps},
                      {"skipped_mentions", e.skipped_mentions}});
  }
  return {{"history", epochs},
          {"switch_epoch", r.switch_epoch ? json(*r.switch_epoch) : json(nullptr)},
          {"best_epoch", r.best_epoch ? json(*r.best_epoch) : json(nullptr)},
          {"calibrated", r.calibrated},
          {"calibration", {r.model.params.calibration.slope, r.model.params.calibration.intercept}}};
}

int cmd_train(TrainArgs a) {
  set_jobs(a.jobs);
  a.config.seed = a.seed;
  if (a.patience > 0) a.config.patience = a.patience;
  if (a.out.empty()) throw Error(ErrorCode::InvalidArgument, "--out is required");

  std::vector<LabeledDocument> train_docs;
  std::vector<LabeledDocument> val_docs;
  std::optional<KnowledgeStore> store;
  if (a.synthetic) {
    SyntheticCorpus corpus = make_synthetic_corpus(a.seed);
    if (!a.synthetic_dir.empty()) {
      fs::create_directories(a.synthetic_dir);
      std::ofstream(fs::path(a.synthetic_dir) / "store.rel", std::ios::binary)
          .write(reinterpret_cast<const char*>(corpus.store_bytes.data()), static_cast<std::streamsize>(corpus.store_bytes.size()));
      std::ofstream tr(fs::path(a.synthetic_dir) / "train.jsonl");
      write_jsonl_documents(tr, corpus.train);
      std::ofstream va(fs::path(a.synthetic_dir) / "val.jsonl");
      write_jsonl_documents(va, corpus.val);
    }
    store.emplace(KnowledgeStore::from_bytes(std::move(corpus.store_bytes)));
    train_docs = std::move(corpus.train);
    val_docs = std::move(corpus.val);
  } else {
    require_file(a.store, "store");
    store.emplace(KnowledgeStore::open(a.store, LoadMode::Preload));
    train_docs = read_documents(a.train);
    if (!a.val.empty()) val_docs = read_documents(a.val);
  }
  a.hyper.dim = store->dim();
  std::cerr << "training on " << train_docs.size() << " documents, validating on " << val_docs.size() << "\n";
  TrainResult r = train(train_docs, val_docs, *store, a.hyper, a.config, a.selection, [](const EpochRecord& e) {
    std::fprintf(stderr, "epoch %zu loss %.4f val F1 %.4f lr %g%s\n", e.epoch, e.train_loss, e.val_micro_f1, e.lr,
                 e.lr_switched ? " (lr switch)" : "");
  });
  save_model(fs::path(a.out), r.model);
  std::cout << history_json(r).dump() << '\n';
  return 0;
}

struct LinkArgs {
  std::string store;
  std::string model;
  std::string text;
  std::string input;
  std::string spans;
  std::string out;
  bool preload = false;
  bool ed_only = false;
  int jobs = 0;
  LinkerConfig linker;
};

int cmd_link(const LinkArgs& a) {
  set_jobs(a.jobs);
  require_file(a.store, "store");
  require_file(a.model, "model");
  KnowledgeStore store = KnowledgeStore::open(a.store, a.preload ? LoadMode::Preload : LoadMode::OnDemand);
  EDModel model = load_model(fs::path(a.model));
  Linker linker(store, model, a.linker);
  Output out(a.out);

  if (!a.text.empty() || a.input.empty()) {
    LinkOutput result;
    if (!a.spans.empty()) {
      require_file(a.spans, "span file");
      result = linker.disambiguate(a.text, read_span_tsv(fs::path(a.spans)));
    } else {
      result = linker.link(a.text);
    }
    json records = json::array();
    for (const auto& ann : result.annotations) records.push_back(annotation_json(ann));
    out.stream() << records.dump() << '\n';
    return 0;
  }

  auto docs = read_documents(a.input);
  std::vector<LinkOutput> results(docs.size());
  std::vector<std::exception_ptr> errors(docs.size());
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < docs.size(); ++i) {
    try {
      results[i] = a.ed_only ? linker.disambiguate(docs[i].text, spans_of(docs[i])) : linker.link(docs[i].text);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  for (std::size_t i = 0; i < docs.size(); ++i) {
    json records = json::array();
    for (const auto& ann : results[i].annotations) records.push_back(annotation_json(ann));
    out.stream() << json{{"id", docs[i].id}, {"annotations", records}}.dump() << '\n';
  }
  return 0;
}

struct EvalArgs {
  std::string store;
  std::string model;
  std::string gold;
  std::string predictions;
  std::string redirects;
  std::string mode = "el";
  std::string out;
  bool json_out = false;
  int jobs = 0;
  LinkerConfig linker;
};

json report_json(const ScoreReport& r) {
  json docs = json::array();
  for (const auto& d : r.documents) docs.push_back({{"tp", d.tp}, {"fp", d.fp}, {"fn", d.fn}, {"f1", d.f1}});
  return {{"micro_precision", r.micro_precision},
          {"micro_recall", r.micro_recall},
          {"micro_f1", r.micro_f1},
          {"macro_f1", r.macro_f1},
          {"tp", r.tp},
          {"fp", r.fp},
          {"fn", r.fn},
          {"empty_documents", r.empty_documents},
          {"empty_document_f1", 1.0},
          {"documents", docs}};
}

int cmd_evaluate(const EvalArgs& a) {
  set_jobs(a.jobs);
  require_file(a.gold, "gold file");
  auto gold_docs = read_documents(a.gold);
  std::vector<std::vector<GoldMention>> gold;
  for (const auto& d : gold_docs) gold.push_back(d.mentions);

  std::optional<RedirectTable> redirects;
  if (!a.redirects.empty()) {
    require_file(a.redirects, "redirect file");
    redirects = read_redirects(fs::path(a.redirects));
  }

  std::vector<std::vector<PredictedMention>> preds(gold_docs.size());
  if (!a.predictions.empty()) {
    auto pred_docs = read_documents(a.predictions);
    if (pred_docs.size() != gold_docs.size()) {
      throw Error(ErrorCode::InvalidArgument, "prediction file has " + std::to_string(pred_docs.size()) + " documents, gold has " +
                                                  std::to_string(gold_docs.size()));
    }
    for (std::size_t i = 0; i < pred_docs.size(); ++i) preds[i] = pred_docs[i].mentions;
  } else {
    require_file(a.store, "store");
    require_file(a.model, "model");
    KnowledgeStore store = KnowledgeStore::open(a.store, LoadMode::Preload);
    EDModel model = load_model(fs::path(a.model));
    Linker linker(store, model, a.linker);
    std::vector<std::exception_ptr> errors(gold_docs.size());
#pragma omp parallel for schedule(dynamic)
    for (std::size_t i = 0; i < gold_docs.size(); ++i) {
      try {
        LinkOutput r = a.mode == "ed" ? linker.disambiguate(gold_docs[i].text, spans_of(gold_docs[i])) : linker.link(gold_docs[i].text);
        for (const auto& ann : r.annotations) preds[i].push_back(PredictedMention{ann.start, ann.length, ann.entity});
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  const RedirectTable* table = redirects ? &*redirects : nullptr;
  ScoreReport report = a.mode == "ed" ? score_ed(preds, gold, table) : score_el(preds, gold, table);
  Output out(a.out);
  if (a.json_out) {
    out.stream() << report_json(report).dump() << '\n';
  } else {
    out.stream() << format_score_table(report, a.mode == "ed" ? "ED (gold spans)" : "EL strong matching");
  }
  return 0;
}

struct ServeArgs {
  ServiceConfig config;
};

int cmd_serve(ServeArgs a) {
  require_file(a.config.store_path, "store");
  require_file(a.config.model_path, "model");
  // Validate both files before binding so a corrupt store never serves.
  KnowledgeStore probe = KnowledgeStore::open(a.config.store_path, LoadMode::OnDemand);
  EDModel model = load_model(a.config.model_path);
  if (model.params.dim != probe.dim()) {
    throw Error(ErrorCode::DimensionMismatch,
                "model dim " + std::to_string(model.params.dim) + " does not match store dim " + std::to_string(probe.dim()));
  }

  LinkService service(a.config);
  std::thread loader;
  if (a.config.preload) {
    loader = std::thread([&service, &a, model]() mutable {
      try {
        KnowledgeStore store = KnowledgeStore::open(a.config.store_path, LoadMode::Preload);
        service.install(std::make_shared<const LoadedModel>(std::move(store), std::move(model), a.config.linker));
        std::cerr << "store preloaded\n";
      } catch (const std::exception& e) {
        std::cerr << "error: preload failed: " << e.what() << '\n';
        std::_Exit(2);
      }
    });
  } else {
    service.install(std::make_shared<const LoadedModel>(std::move(probe), std::move(model), a.config.linker));
  }
  std::cerr << "listening on " << a.config.host << ":" << a.config.port << '\n';
  const bool ok = service.listen();
  if (loader.joinable()) loader.join();
  if (!ok) throw Error(ErrorCode::Io, "cannot bind " + a.config.host + ":" + std::to_string(a.config.port));
  return 0;
}

struct BenchArgs {
  std::string store;
  std::string model;
  std::string input;
  bool synthetic = false;
  std::size_t documents = 50;
  std::uint64_t seed = 0;
  bool json_out = false;
  int jobs = 1;
  LinkerConfig linker;
};

int cmd_bench(const BenchArgs& a) {
  // One thread by default so stage times are comparable across machines.
  omp_set_num_threads(a.jobs > 0 ? a.jobs : 1);
  std::optional<KnowledgeStore> store;
  EDModel model;
  std::vector<std::string> texts;
  if (a.synthetic) {
    EfficiencySizes sizes;
    sizes.documents = a.documents;
    EfficiencyFixture fx = make_efficiency_fixture(a.seed, sizes);
    store.emplace(KnowledgeStore::from_bytes(std::move(fx.store_bytes)));
    texts = std::move(fx.documents);
    if (a.model.empty()) {
      model.hyper.dim = store->dim();
      model.params = EDParams::initialize(model.hyper, a.seed);
    }
  } else {
    require_file(a.store, "store");
    store.emplace(KnowledgeStore::open(a.store, LoadMode::Preload));
    for (auto& d : read_documents(a.input)) texts.push_back(std::move(d.text));
    if (a.model.empty()) throw Error(ErrorCode::InvalidArgument, "--model is required without --synthetic");
  }
  if (!a.model.empty()) {
    require_file(a.model, "model");
    model = load_model(fs::path(a.model));
  }
  if (texts.empty()) throw Error(ErrorCode::InvalidArgument, "no documents to benchmark");
  Linker linker(*store, model, a.linker);
  EfficiencyReport report = measure_efficiency(texts, [&](const std::string& text, std::size_t& mentions) {
    LinkOutput out = linker.link(text);
    mentions = out.annotations.size();
    return StageSeconds{out.md_seconds, out.ed_seconds};
  });
  if (a.json_out) {
    auto ms = [](const MeanSd& m) { return json{{"mean", m.mean}, {"sd", m.sd}}; };
    std::cout << json{{"documents", report.documents}, {"md", ms(report.md)},       {"ed", ms(report.ed)},
                      {"total", ms(report.total)},     {"words", ms(report.words)}, {"mentions", ms(report.mentions)}}
                     .dump()
              << '\n';
  } else {
    std::cout << format_efficiency_table(report);
  }
  return 0;
}

void add_linker_options(CLI::App* cmd, LinkerConfig& cfg) {
  cmd->add_option("--max-ngram", cfg.detector.max_ngram, "Longest token n-gram matched by the gazetteer")->check(CLI::PositiveNumber);
  cmd->add_option("--min-link-probability", cfg.detector.min_link_probability, "Skip surfaces whose best prior is below this");
  cmd->add_option("--k1", cfg.selection.k1, "Candidates kept by prior");
  cmd->add_option("--k2", cfg.selection.k2, "Candidates added by context similarity");
  cmd->add_option("--context-words", cfg.selection.n_context, "Context window in words");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"relink: entity linking toolkit"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  BuildArgs build;
  auto* b = app.add_subcommand("build-index", "Build a store from anchors, dictionaries and embeddings");
  b->add_option("--anchors", build.anchors, "Anchor corpora (wikitext, or .tsv surface/entity/count); comma separated")->required();
  b->add_option("--dict", build.dicts, "Surface<TAB>entity dictionaries with uniform priors; comma separated");
  b->add_option("--redirects", build.redirects, "alias<TAB>title redirect table");
  b->add_option("--embeddings", build.embeddings, "Word and entity vector files, e.g. w.vec,e.vec")->required();
  b->add_option("--entity-prefix", build.entity_prefix, "Token prefix marking entity vectors");
  b->add_option("--max-candidates", build.max_candidates, "Entries kept per surface")->check(CLI::Range(1, 100));
  b->add_flag("--case-sensitive", build.case_sensitive, "Keep surface case");
  b->add_option("--out", build.out, "Output store file")->required();

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train the disambiguation model");
  t->add_option("--store", tr.store, "Store file");
  t->add_option("--train", tr.train, "Training documents (.jsonl or AIDA .tsv)");
  t->add_option("--val", tr.val, "Validation documents");
  t->add_flag("--synthetic", tr.synthetic, "Train on a generated toy corpus");
  t->add_option("--synthetic-dir", tr.synthetic_dir, "Write the generated store and documents here");
  t->add_option("--out", tr.out, "Output model file")->required();
  t->add_option("--seed", tr.seed, "Random seed");
  t->add_option("--epochs", tr.config.epochs, "Training epochs");
  t->add_option("--patience", tr.patience, "Stop after this many epochs without improvement (0 = off)");
  t->add_option("--lr", tr.config.lr_initial, "Initial learning rate");
  t->add_option("--lr-reduced", tr.config.lr_reduced, "Learning rate after the switch");
  t->add_option("--f1-switch", tr.config.f1_switch, "Validation F1 that triggers the switch");
  t->add_option("--relations", tr.hyper.relations, "Latent relations K");
  t->add_option("--margin", tr.hyper.margin, "Hinge margin");
  t->add_option("--lbp-iterations", tr.hyper.lbp_iterations, "LBP iterations");
  t->add_option("--damping", tr.hyper.lbp_damping, "LBP damping");
  t->add_option("--attention-keep", tr.hyper.attention_keep, "Context words kept by attention");
  t->add_option("--hidden", tr.hyper.scorer_hidden, "Hidden units of the final scorer");
  t->add_option("--jobs", tr.jobs, "Threads for validation scoring");
  t->add_option("--k1", tr.selection.k1, "Candidates kept by prior");
  t->add_option("--k2", tr.selection.k2, "Candidates added by context similarity");

  LinkArgs ln;
  auto* l = app.add_subcommand("link", "Link a text or a file of documents");
  l->add_option("--store", ln.store, "Store file")->required();
  l->add_option("--model", ln.model, "Model file")->required();
  l->add_option("--text", ln.text, "Text to link");
  l->add_option("--input", ln.input, "Documents file (.jsonl or AIDA .tsv)");
  l->add_option("--spans", ln.spans, "start<TAB>length spans for --text (disambiguation only)");
  l->add_flag("--ed-only", ln.ed_only, "Disambiguate the gold spans of --input documents");
  l->add_option("--out", ln.out, "Output file");
  l->add_flag("--preload", ln.preload, "Load the whole store into memory");
  l->add_option("--jobs", ln.jobs, "Document-parallel threads");
  add_linker_options(l, ln.linker);

  EvalArgs ev;
  auto* e = app.add_subcommand("evaluate", "Score predictions against gold annotations");
  e->add_option("--gold", ev.gold, "Gold documents")->required();
  e->add_option("--predictions", ev.predictions, "Predicted documents in the same format");
  e->add_option("--store", ev.store, "Store file (when predicting)");
  e->add_option("--model", ev.model, "Model file (when predicting)");
  e->add_option("--mode", ev.mode, "el or ed")->check(CLI::IsMember({"el", "ed"}));
  e->add_option("--redirects", ev.redirects, "Redirect table for title normalization");
  e->add_flag("--json", ev.json_out, "Emit the report as JSON");
  e->add_option("--out", ev.out, "Output file");
  e->add_option("--jobs", ev.jobs, "Document-parallel threads");
  add_linker_options(e, ev.linker);

  ServeArgs sv;
  auto* s = app.add_subcommand("serve", "Serve the HTTP API");
  s->add_option("--store", sv.config.store_path, "Store file")->required()->envname("RELINK_STORE");
  s->add_option("--model", sv.config.model_path, "Model file")->required()->envname("RELINK_MODEL");
  s->add_option("--host", sv.config.host, "Bind address")->envname("RELINK_HOST");
  s->add_option("--port", sv.config.port, "Port")->envname("RELINK_PORT");
  s->add_flag("--preload", sv.config.preload, "Load the whole store into memory")->envname("RELINK_PRELOAD");
  s->add_option("--workers", sv.config.workers, "Request worker threads")->envname("RELINK_WORKERS");
  s->add_option("--max-text-bytes", sv.config.max_text_bytes, "Largest accepted text");
  add_linker_options(s, sv.config.linker);

  BenchArgs bn;
  auto* k = app.add_subcommand("bench", "Per-stage timing report");
  k->add_option("--store", bn.store, "Store file");
  k->add_option("--model", bn.model, "Model file");
  k->add_option("--input", bn.input, "Documents to time");
  k->add_flag("--synthetic", bn.synthetic, "Use a generated 50-document workload");
  k->add_option("--documents", bn.documents, "Generated documents");
  k->add_option("--seed", bn.seed, "Random seed for the generated workload");
  k->add_flag("--json", bn.json_out, "Emit the report as JSON");
  k->add_option("--jobs", bn.jobs, "Kernel threads (default 1)")->check(CLI::PositiveNumber);
  add_linker_options(k, bn.linker);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::CallForAllHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::ParseError& ex) {
    app.exit(ex, std::cerr, std::cerr);
    return 1;
  }

  try {
    if (*b) return cmd_build_index(build);
    if (*t) {
      if (!tr.synthetic && (tr.store.empty() || tr.train.empty())) {
        throw Error(ErrorCode::InvalidArgument, "train needs --store and --train, or --synthetic");
      }
      return cmd_train(tr);
    }
    if (*l) {
      if (ln.text.empty() == ln.input.empty()) throw Error(ErrorCode::InvalidArgument, "link needs exactly one of --text or --input");
      return cmd_link(ln);
    }
    if (*e) {
      if (ev.predictions.empty() && (ev.store.empty() || ev.model.empty())) {
        throw Error(ErrorCode::InvalidArgument, "evaluate needs --predictions, or --store and --model");
      }
      return cmd_evaluate(ev);
    }
    if (*s) return cmd_serve(sv);
    if (*k) {
      if (!bn.synthetic && (bn.store.empty() || bn.input.empty())) {
        throw Error(ErrorCode::InvalidArgument, "bench needs --store, --model and --input, or --synthetic");
      }
      return cmd_bench(bn);
    }
  } catch (const Error& ex) {
    std::cerr << "error: " << error_code_name(ex.code()) << ": " << ex.what() << '\n';
    return is_input_error(ex.code()) ? 1 : 2;
  } catch (const std::exception& ex) {
    std::cerr << "internal error: " << ex.what() << '\n';
    return 2;
  }
  return 2;
}
