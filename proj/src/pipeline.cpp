#include "memtax/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <iostream>
#include <map>
#include <set>
#include <unordered_map>

#include "memtax/corpus.hpp"
#include "memtax/dupindex.hpp"
#include "memtax/feature_vector.hpp"
#include "memtax/io_util.hpp"
#include "memtax/matching.hpp"
#include "memtax/parallel.hpp"
#include "memtax/perplexity.hpp"
#include "memtax/predictor.hpp"
#include "memtax/rng.hpp"
#include "memtax/stats.hpp"
#include "memtax/synthgen.hpp"
#include "memtax/taxonomy.hpp"

namespace memtax {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

// Stream ids for seeds derived from the root seed.
constexpr std::uint64_t kSynthStream = 1, kLabelStream = 2, kRepresentativeStream = 3,
                        kKlStream = 4, kDependencyStream = 5, kSplitStream = 6,
                        kTrainStream = 7, kEvalStream = 8, kCohortStream = 9;

void log(const std::string& stage, const std::string& message) {
  std::cerr << "[memtax " << stage << "] " << message << '\n';
}

class Staging {
 public:
  Staging(const fs::path& out, const std::string& command) : out_(out), dir_(out / (".staging-" + command)) {
    fs::create_directories(out_);
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  ~Staging() {
    std::error_code ec;
    fs::remove_all(dir_, ec);
  }
  Staging(const Staging&) = delete;
  Staging& operator=(const Staging&) = delete;

  fs::path file(const std::string& name) {
    names_.push_back(name);
    return dir_ / name;
  }
  void promote() {
    for (const auto& n : names_) fs::rename(dir_ / n, out_ / n);
  }

 private:
  fs::path out_, dir_;
  std::vector<std::string> names_;
};

void require_file(const fs::path& p, const std::string& what) {
  if (p.empty() || !fs::is_regular_file(p)) throw ConfigError(what + " not found: " + p.string());
}

void write_json(const fs::path& p, const ojson& j) { io::write_file(p, j.dump(2) + "\n"); }

std::string csv_meta(const ojson& meta) { return "# " + meta.dump() + "\n"; }

CorpusFormat corpus_format(const RunConfig& cfg) {
  return parse_corpus_format(cfg.get<std::string>("/paths/corpus_format"));
}

std::string corpus_file_name(const RunConfig& cfg) {
  return corpus_format(cfg) == CorpusFormat::binary ? "corpus.bin" : "corpus.jsonl";
}

fs::path corpus_path(const RunConfig& cfg) { return cfg.path("corpus", corpus_file_name(cfg)); }
fs::path artifact(const RunConfig& cfg, const std::string& name) { return cfg.output_dir / name; }

HashParams hash_params(const RunConfig& cfg) {
  HashParams p;
  p.base = cfg.get<std::uint64_t>("/index/base");
  p.modulus = cfg.get<std::uint64_t>("/index/modulus");
  p.window = cfg.get<std::size_t>("/index/window");
  return p;
}

TaxonomyConfig taxonomy_config(const RunConfig& cfg) {
  TaxonomyConfig t;
  t.recitation_threshold = cfg.get<std::uint64_t>("/taxonomy/recitation_threshold");
  t.precedence = parse_precedence(cfg.get<std::string>("/taxonomy/precedence"));
  return t;
}

SampleExtraction samples_of(const RunConfig& cfg, const Corpus& corpus) {
  return extract_samples(corpus, cfg.get<std::size_t>("/samples/offset"),
                         cfg.get<bool>("/samples/multi_window"));
}

struct FeatureSources {
  std::string embeddings = "hashed_bag";
  std::string perplexity = "reference_lm";
};

std::vector<FeatureRecord> compute_records(const RunConfig& cfg, const Corpus& corpus,
                                           const Vocabulary& vocab, const DuplicateIndex& index,
                                           const std::vector<Sample>& samples, bool external_inputs,
                                           FeatureSources& sources) {
  EmbeddingTable table;
  const fs::path emb = external_inputs ? cfg.path("embeddings") : fs::path();
  if (!emb.empty()) {
    require_file(emb, "embedding file");
    table = load_embeddings(emb);
    if (table.rows() != samples.size())
      throw ValidationError("embedding file has " + std::to_string(table.rows()) + " rows for " +
                            std::to_string(samples.size()) + " samples");
    sources.embeddings = "file";
  } else {
    table = hashed_bag_embeddings(samples, cfg.get<std::size_t>("/features/embedding_dim"));
  }
  FeatureOptions options;
  options.semantic_threshold = cfg.get<double>("/features/semantic_threshold");
  options.textual_relative_threshold = cfg.get<double>("/features/textual_relative_threshold");
  auto records = featurize(samples, index, table, vocab, options, Execution::parallel);

  std::vector<TokenLogProbs> lps;
  const fs::path lp_path = external_inputs ? cfg.path("logprobs") : fs::path();
  if (!lp_path.empty()) {
    require_file(lp_path, "log-probability file");
    lps = load_logprobs(lp_path);
    sources.perplexity = "file";
  } else {
    const auto lm = train_reference_lm(corpus, cfg.get<std::size_t>("/perplexity/order"),
                                       cfg.get<double>("/perplexity/k"));
    lps.resize(samples.size());
    const auto n = static_cast<std::ptrdiff_t>(samples.size());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i) lps[i] = score_sample(lm, samples[i]);
  }
  const auto missing = attach_perplexities(records, lps);
  if (!missing.empty())
    throw ValidationError(std::to_string(missing.size()) + " sample(s) have no log-probabilities, first id " +
                          std::to_string(missing.front()));
  return records;
}

std::vector<FeatureRecord> read_records(const fs::path& p, const std::string& what) {
  require_file(p, what);
  return read_feature_jsonl(p).records;
}

std::vector<std::uint64_t> ids_of(std::span<const FeatureRecord> records) {
  std::vector<std::uint64_t> ids;
  for (const auto& r : records) ids.push_back(r.sample_id);
  return ids;
}

std::size_t labeled_count(std::span<const FeatureRecord> records) {
  return static_cast<std::size_t>(std::count_if(records.begin(), records.end(),
                                                [](const FeatureRecord& r) { return r.memorized.has_value(); }));
}

void require_labels(std::span<const FeatureRecord> records, const std::string& stage) {
  const auto labeled = labeled_count(records);
  if (labeled != records.size())
    throw ValidationError(stage + " needs memorization labels for every sample; " +
                          std::to_string(records.size() - labeled) + " of " +
                          std::to_string(records.size()) + " are unlabeled");
}

// ---- stages ----

void stage_synth(const RunConfig& cfg, Staging& st) {
  auto section = cfg.at("/synth");
  SynthSpec spec = synth_spec_from_json(section);
  spec.seed = derive_seed(cfg.seed, kSynthStream);
  log("synth", "generating " + std::to_string(spec.documents) + " documents of " +
                   std::to_string(spec.document_length) + " tokens");
  const auto gen = generate_corpus(spec);
  if (!spec.modalities.empty() && corpus_format(cfg) == CorpusFormat::binary)
    log("synth", "warning: the binary corpus format does not store modalities");
  if (corpus_format(cfg) == CorpusFormat::binary) save_corpus_binary(gen.corpus, st.file(corpus_file_name(cfg)));
  else save_corpus_jsonl(gen.corpus, st.file(corpus_file_name(cfg)));
  gen.vocabulary.save(st.file("vocab.jsonl"));

  // Labels come from the generator's rule applied to the production features.
  const auto index = build_index(gen.corpus, hash_params(cfg), Execution::parallel,
                                 cfg.get<std::size_t>("/index/shards"));
  const auto extraction = samples_of(cfg, gen.corpus);
  FeatureSources sources;
  auto records = compute_records(cfg, gen.corpus, gen.vocabulary, index, extraction.samples, false, sources);
  assign_categories(records, taxonomy_config(cfg));
  const auto write_labels = [&](const std::array<CategoryCoefficients, 3>& coeffs, std::uint64_t seed,
                                const std::string& name) {
    const auto labels = simulate_memorization(records, coeffs, seed);
    std::vector<std::uint64_t> ids;
    for (std::size_t i = 0; i < records.size(); ++i)
      if (labels[i]) ids.push_back(records[i].sample_id);
    std::sort(ids.begin(), ids.end());
    write_id_list(ids, st.file(name));
    log("synth", name + ": " + std::to_string(ids.size()) + " of " + std::to_string(records.size()) + " memorized");
  };
  write_labels(spec.coefficients, derive_seed(cfg.seed, kLabelStream), "labels.txt");
  std::set<std::string> names;
  std::size_t c = 0;
  for (const auto& cohort : section.at("cohorts")) {
    const auto name = cohort.at("name").get<std::string>();
    if (!names.insert(name).second) throw ConfigError("duplicate synth cohort name '" + name + "'");
    auto coeffs = spec.coefficients;
    for (auto& k : coeffs) k.bias += cohort.at("bias_shift").get<double>();
    write_labels(coeffs, derive_seed(derive_seed(cfg.seed, kCohortStream), c++), "cohort_" + name + ".txt");
  }
  ojson manifest = {{"_meta", cfg.provenance("synth")}};
  manifest["corpus"] = {{"documents", gen.corpus.documents.size()},
                        {"tokens", gen.corpus.total_tokens()},
                        {"vocabulary_size", gen.corpus.vocabulary_size}};
  manifest["manifest"] = to_json(gen.manifest, spec);
  write_json(st.file("manifest.json"), manifest);
}

void stage_index(const RunConfig& cfg, Staging& st) {
  const auto cp = corpus_path(cfg);
  require_file(cp, "corpus");
  const auto corpus = load_corpus(cp, corpus_format(cfg));
  const auto index = build_index(corpus, hash_params(cfg), Execution::parallel,
                                 cfg.get<std::size_t>("/index/shards"));
  save_index(index, st.file("index.mtxi"));
  ojson meta = {{"_meta", cfg.provenance("index")},
                {"windows", index.window_count()},
                {"documents", corpus.documents.size()},
                {"base", index.params().base},
                {"modulus", index.params().modulus},
                {"window", index.params().window},
                {"counting", "inclusive"}};
  write_json(st.file("index.meta.json"), meta);
  log("index", std::to_string(index.window_count()) + " windows over " +
                   std::to_string(corpus.documents.size()) + " documents");
}

void stage_featurize(const RunConfig& cfg, Staging& st) {
  const auto cp = corpus_path(cfg);
  require_file(cp, "corpus");
  const auto vp = cfg.path("vocabulary", "vocab.jsonl");
  require_file(vp, "vocabulary");
  const auto ip = artifact(cfg, "index.mtxi");
  require_file(ip, "duplicate index (run `memtax index` first)");
  const auto corpus = load_corpus(cp, corpus_format(cfg));
  const auto vocab = Vocabulary::load(vp);
  const auto index = load_index(ip, corpus, Execution::parallel);
  auto extraction = samples_of(cfg, corpus);

  ojson label_meta = nullptr;
  fs::path lp = cfg.path("labels");
  if (lp.empty() && fs::is_regular_file(artifact(cfg, "labels.txt"))) lp = artifact(cfg, "labels.txt");
  if (!lp.empty()) {
    require_file(lp, "label file");
    const auto report = attach_labels(extraction.samples, lp);
    if (!report.duplicate_ids.empty())
      log("featurize", "warning: " + std::to_string(report.duplicate_ids.size()) + " duplicate label id(s)");
    if (!report.rejected_ids.empty())
      log("featurize", "warning: " + std::to_string(report.rejected_ids.size()) + " label id(s) match no sample");
    label_meta = {{"labeled", report.labeled}, {"duplicate_ids", report.duplicate_ids},
                  {"rejected_ids", report.rejected_ids}};
  } else {
    log("featurize", "no label file; memorization status left unknown");
  }
  FeatureSources sources;
  const auto records = compute_records(cfg, corpus, vocab, index, extraction.samples, true, sources);
  ojson meta = cfg.provenance("featurize");
  meta["samples"] = records.size();
  meta["skipped_documents"] = extraction.skipped_documents;
  meta["labels"] = label_meta;
  meta["embeddings"] = sources.embeddings;
  meta["perplexity"] = sources.perplexity;
  meta["duplicate_counting"] = "inclusive";
  write_feature_jsonl(records, meta, st.file("features.jsonl"));
  write_feature_csv(records, meta, st.file("features.csv"));
  log("featurize", std::to_string(records.size()) + " samples featurized");
}

void stage_taxonomy(const RunConfig& cfg, Staging& st) {
  auto records = read_records(artifact(cfg, "features.jsonl"), "feature file (run `memtax featurize` first)");
  const auto tc = taxonomy_config(cfg);
  assign_categories(records, tc);
  ojson meta = cfg.provenance("taxonomy");
  meta["taxonomy"] = taxonomy_provenance(tc);
  write_feature_jsonl(records, meta, st.file("taxonomy.jsonl"));
  write_feature_csv(records, meta, st.file("taxonomy.csv"));
  const auto counts = category_counts(records);
  ojson summary = {{"_meta", meta}, {"samples", records.size()}};
  ojson per = ojson::object();
  for (auto c : kCategories) per[to_string(c)] = counts[static_cast<std::size_t>(c)];
  summary["counts"] = per;
  write_json(st.file("taxonomy_summary.json"), summary);
  log("taxonomy", "recitation " + std::to_string(counts[0]) + ", reconstruction " +
                      std::to_string(counts[1]) + ", recollection " + std::to_string(counts[2]));
}

const std::vector<FeatureRecord> taxonomy_records(const RunConfig& cfg) {
  return read_records(artifact(cfg, "taxonomy.jsonl"), "taxonomy file (run `memtax taxonomy` first)");
}

std::vector<std::uint64_t> representative_of(const RunConfig& cfg, std::span<const FeatureRecord> records) {
  return representative_ids(ids_of(records), cfg.get<double>("/sampling/representative_fraction"),
                            derive_seed(cfg.seed, kRepresentativeStream));
}

void stage_stats(const RunConfig& cfg, Staging& st) {
  const auto records = taxonomy_records(cfg);
  require_labels(records, "stats");
  const auto features = cfg.get<std::vector<std::string>>("/stats/features");
  for (const auto& f : features) {
    try {
      model_feature_index(f);
    } catch (const ArgumentError& e) {
      throw ConfigError(std::string("/stats/features: ") + e.what());
    }
  }
  const auto rep = representative_of(cfg, records);
  const std::set<std::uint64_t> rep_set(rep.begin(), rep.end());
  std::vector<std::vector<double>> rows;
  for (const auto& r : records) rows.push_back(model_features(r));
  const std::size_t n_mem = static_cast<std::size_t>(std::count_if(
      records.begin(), records.end(), [](const FeatureRecord& r) { return *r.memorized; }));
  const ojson meta = cfg.provenance("stats");

  ojson hists = ojson::object();
  std::string hist_csv = csv_meta(meta) + "feature,set,bin,lo,hi,mass\n";
  const std::size_t bins = cfg.get<std::size_t>("/stats/histogram_bins");
  for (const auto& f : features) {
    const auto col = model_feature_index(f);
    std::vector<double> rep_v, mem_v;
    for (std::size_t i = 0; i < records.size(); ++i) {
      if (rep_set.count(records[i].sample_id)) rep_v.push_back(rows[i][col]);
      if (*records[i].memorized) mem_v.push_back(rows[i][col]);
    }
    ojson h = {{"representative_count", rep_v.size()}, {"memorized_count", mem_v.size()}};
    if (rep_v.empty() || mem_v.empty() || n_mem >= records.size()) {
      h["note"] = "empty representative or memorized set, or no unmemorized samples";
      hists[f] = h;
      continue;
    }
    std::vector<double> pooled = rep_v;
    pooled.insert(pooled.end(), mem_v.begin(), mem_v.end());
    const auto [lo, hi] = std::minmax_element(pooled.begin(), pooled.end());
    const auto edges = make_edges(*lo, *hi, bins, BinScale::linear);
    const auto rh = build_histogram(rep_v, edges);
    const auto mh = build_histogram(mem_v, edges);
    const auto un = estimate_unmemorized(rh, mh, records.size(), n_mem);
    h["representative"] = to_json(rh);
    h["memorized"] = to_json(mh);
    h["unmemorized"] = to_json(un.histogram);
    h["clipped_mass"] = un.clipped_mass;
    hists[f] = h;
    for (const auto& [name, hist] : {std::pair<std::string, const Histogram*>{"representative", &rh},
                                     {"memorized", &mh}, {"unmemorized", &un.histogram}})
      for (std::size_t b = 0; b < hist->masses.size(); ++b)
        hist_csv += f + "," + name + "," + std::to_string(b) + "," + format_double(hist->edges[b]) + "," +
                    format_double(hist->edges[b + 1]) + "," + format_double(hist->masses[b]) + "\n";
  }

  KLConfig kc;
  kc.perplexity_bins = cfg.get<std::size_t>("/stats/perplexity_bins");
  kc.epsilon = cfg.get<double>("/stats/epsilon");
  kc.bootstrap = cfg.get<std::size_t>("/stats/bootstrap");
  kc.integer_bins = cfg.get<std::size_t>("/stats/integer_bins");
  kc.min_per_class = cfg.get<std::size_t>("/stats/min_per_class");
  kc.seed = derive_seed(cfg.seed, kKlStream);
  const auto curve = kl_vs_duplicates(records, kc, Execution::parallel);
  std::string kl_csv = csv_meta(meta) + "duplicates_lo,duplicates_hi,memorized,unmemorized,kl,kl_plugin,stddev,ci_low,ci_high\n";
  for (const auto& b : curve.bins)
    kl_csv += std::to_string(b.bin.lo) + "," + std::to_string(b.bin.hi) + "," + std::to_string(b.memorized) + "," +
              std::to_string(b.unmemorized) + "," + format_double(b.kl) + "," + format_double(b.kl_plugin) + "," +
              format_double(b.stddev) + "," + format_double(b.ci_low) + "," + format_double(b.ci_high) + "\n";

  DependencyConfig dc;
  dc.permutations = cfg.get<std::size_t>("/stats/permutations");
  dc.min_samples = cfg.get<std::size_t>("/stats/min_samples");
  dc.seed = derive_seed(cfg.seed, kDependencyStream);
  const auto dep = dependency_report(records, features, dc, Execution::parallel);
  std::string dep_csv = csv_meta(meta) + "group,category,feature,n,rho,p_value,degenerate\n";
  for (const auto& e : dep)
    dep_csv += e.group + "," + e.category + "," + e.feature + "," + std::to_string(e.result.n) + "," +
               (e.result.degenerate ? "," : format_double(e.result.rho) + "," + format_double(e.result.p_value)) +
               "," + (e.result.degenerate ? "true" : "false") + "\n";

  ojson report = {{"_meta", meta}, {"config", cfg.values}};
  report["samples"] = records.size();
  report["memorized"] = n_mem;
  report["representative"] = rep.size();
  report["histograms"] = hists;
  report["kl_vs_duplicates"] = to_json(curve);
  report["dependency"] = to_json(dep);
  write_json(st.file("stats.json"), report);
  io::write_file(st.file("histograms.csv"), hist_csv);
  io::write_file(st.file("kl.csv"), kl_csv);
  io::write_file(st.file("dependency.csv"), dep_csv);
  log("stats", std::to_string(curve.bins.size()) + " KL bins, " + std::to_string(dep.size()) + " dependency cells");
}

TrainOptions train_options(const RunConfig& cfg) {
  TrainOptions o;
  o.lambda = cfg.get<double>("/predictor/lambda");
  o.tolerance = cfg.get<double>("/predictor/tolerance");
  o.max_iterations = cfg.get<std::size_t>("/predictor/max_iterations");
  o.seed = derive_seed(cfg.seed, kTrainStream);
  return o;
}

void stage_train(const RunConfig& cfg, Staging& st) {
  const auto records = taxonomy_records(cfg);
  require_labels(records, "train");
  const auto rep = representative_of(cfg, records);
  const std::set<std::uint64_t> rep_set(rep.begin(), rep.end());
  std::vector<std::uint64_t> mem;
  for (const auto& r : records)
    if (*r.memorized && !rep_set.count(r.sample_id)) mem.push_back(r.sample_id);
  SplitRatios ratios;
  ratios.test = cfg.get<double>("/predictor/test_ratio");
  ratios.validation = cfg.get<double>("/predictor/validation_ratio");
  const auto splits = split_datasets(rep, mem, ratios, derive_seed(cfg.seed, kSplitStream));
  const auto& features = model_feature_names();
  const auto train = make_dataset(records, features, splits.train);
  const auto validation = make_dataset(records, features, splits.validation);
  const auto options = train_options(cfg);

  ModelSet models;
  models.features = features;
  models.options = options;
  models.baseline = train_logreg(train.X, train.y, features, options);
  models.taxonomic = train_taxonomic(train, options);
  for (const auto& cell : models.taxonomic.cells)
    if (!cell.model) log("train", "taxonomic cell " + cell.name + " uses a constant fallback: " + cell.error);
  if (cfg.get<bool>("/predictor/partition_search")) {
    PartitionSearchConfig pc;
    pc.candidates = cfg.get<std::vector<std::string>>("/predictor/candidates");
    pc.percentiles = cfg.get<std::vector<double>>("/predictor/percentiles");
    pc.decision_threshold = cfg.get<double>("/predictor/decision_threshold");
    for (const auto& f : pc.candidates)
      if (std::find(features.begin(), features.end(), f) == features.end())
        throw ConfigError("/predictor/candidates: unknown feature '" + f + "'");
    auto result = partition_search(train, validation, pc, options, Execution::parallel);
    log("train", "partition search: " + std::to_string(result.log.evaluated) + " evaluated, " +
                     std::to_string(result.log.skipped) + " skipped of " + std::to_string(result.log.search_space));
    models.partitioned = std::move(result.model);
    models.search_log = result.log;
  }
  const ojson meta = cfg.provenance("train");
  ojson split_json = {{"_meta", meta}};
  split_json["splits"] = to_json(splits);
  write_json(st.file("splits.json"), split_json);
  ojson model_json = {{"_meta", meta}};
  model_json["models"] = to_json(models);
  write_json(st.file("models.json"), model_json);
  io::write_file(st.file("weights.csv"), csv_meta(meta) + weights_csv(features, report_weights(models)));
  log("train", "train " + std::to_string(splits.train.size()) + ", validation " +
                   std::to_string(splits.validation.size()) + ", test " + std::to_string(splits.test.size()));
}

nlohmann::json read_json(const fs::path& p, const std::string& what) {
  require_file(p, what);
  try {
    return nlohmann::json::parse(io::read_file(p));
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(p.string() + " is not valid JSON: " + e.what());
  }
}

void stage_evaluate(const RunConfig& cfg, Staging& st) {
  const auto model_json = read_json(artifact(cfg, "models.json"), "trained models (run `memtax train` first)");
  const auto split_json = read_json(artifact(cfg, "splits.json"), "dataset splits (run `memtax train` first)");
  const auto records = taxonomy_records(cfg);
  const auto models = models_from_json(model_json.at("models"));
  const auto splits = splits_from_json(split_json.at("splits"));
  const auto test = make_dataset(records, models.features, splits.test);
  EvalConfig ec;
  ec.bootstrap = cfg.get<std::size_t>("/predictor/bootstrap");
  ec.decision_threshold = cfg.get<double>("/predictor/decision_threshold");
  ec.seed = derive_seed(cfg.seed, kEvalStream);
  const auto report = evaluate(models, test, ec, Execution::parallel);
  const ojson meta = cfg.provenance("evaluate");
  ojson j = {{"_meta", meta}, {"test_samples", test.size()}};
  j["rows"] = to_json(report);
  write_json(st.file("eval.json"), j);
  io::write_file(st.file("eval.csv"), csv_meta(meta) + eval_csv(report));
  for (const auto& name : {"baseline", "taxonomic", "partitioned"}) {
    if (std::string(name) == "partitioned" && !models.partitioned) continue;
    const auto& row = report.find(name, "all");
    char buf[96];
    std::snprintf(buf, sizeof buf, "%s: F1 %.4f, accuracy %.4f", name, row.value.f1, row.value.accuracy);
    log("evaluate", buf);
  }
}

void stage_cohort(const RunConfig& cfg, Staging& st) {
  const auto& list = cfg.at("/paths/cohorts");
  if (list.empty()) throw ConfigError("/paths/cohorts: no cohorts configured");
  std::vector<CohortInput> cohorts;
  std::set<std::string> names;
  for (const auto& c : list) {
    CohortInput in;
    in.name = c.at("name").get<std::string>();
    if (!names.insert(in.name).second) throw ConfigError("/paths/cohorts: duplicate cohort name '" + in.name + "'");
    fs::path p = c.at("labels").get<std::string>();
    if (p.is_relative()) p = cfg.base_dir / p;
    require_file(p, "label file for cohort '" + in.name + "'");
    in.memorized_ids = read_id_list(p);
    cohorts.push_back(std::move(in));
  }
  const auto records = taxonomy_records(cfg);
  const auto rows = cohort_report(cohorts, records);
  const ojson meta = cfg.provenance("cohort");
  ojson j = {{"_meta", meta}};
  j["cohorts"] = to_json(rows);
  write_json(st.file("cohort.json"), j);
  io::write_file(st.file("cohort.csv"), csv_meta(meta) + cohort_csv(rows));
}

}  // namespace

std::vector<std::uint64_t> representative_ids(std::vector<std::uint64_t> ids, double fraction,
                                              std::uint64_t seed) {
  std::sort(ids.begin(), ids.end());
  Rng rng(seed);
  for (std::size_t i = ids.size(); i > 1; --i)
    std::swap(ids[i - 1], ids[std::uniform_int_distribution<std::size_t>(0, i - 1)(rng)]);
  const auto keep = std::min(ids.size(), static_cast<std::size_t>(std::llround(fraction * static_cast<double>(ids.size()))));
  ids.resize(keep);
  std::sort(ids.begin(), ids.end());
  return ids;
}

std::vector<CohortRow> cohort_report(const std::vector<CohortInput>& cohorts,
                                     std::span<const FeatureRecord> records) {
  std::unordered_map<std::uint64_t, Category> category;
  for (const auto& r : records) {
    if (!r.taxonomy) throw ValidationError("sample " + std::to_string(r.sample_id) + " has no taxonomy category");
    category.emplace(r.sample_id, *r.taxonomy);
  }
  std::set<std::string> names;
  std::vector<CohortRow> rows;
  for (const auto& c : cohorts) {
    if (!names.insert(c.name).second) throw ConfigError("duplicate cohort name '" + c.name + "'");
    CohortRow row;
    row.name = c.name;
    std::vector<std::uint64_t> unknown;
    const std::set<std::uint64_t> ids(c.memorized_ids.begin(), c.memorized_ids.end());
    for (auto id : ids) {
      const auto it = category.find(id);
      if (it == category.end()) {
        unknown.push_back(id);
        continue;
      }
      ++row.counts[static_cast<std::size_t>(it->second)];
      ++row.memorized;
    }
    if (!unknown.empty()) {
      std::string msg = "cohort '" + c.name + "' names " + std::to_string(unknown.size()) + " unknown sample id(s):";
      for (std::size_t i = 0; i < std::min<std::size_t>(unknown.size(), 10); ++i) msg += " " + std::to_string(unknown[i]);
      throw ValidationError(msg);
    }
    if (row.memorized > 0)
      for (std::size_t k = 0; k < 3; ++k)
        row.percent[k] = 100.0 * static_cast<double>(row.counts[k]) / static_cast<double>(row.memorized);
    rows.push_back(std::move(row));
  }
  return rows;
}

ojson to_json(const std::vector<CohortRow>& rows) {
  ojson arr = ojson::array();
  for (const auto& r : rows) {
    ojson cats = ojson::object();
    for (auto c : kCategories) {
      const auto k = static_cast<std::size_t>(c);
      cats[to_string(c)] = {{"count", r.counts[k]},
                            {"percent", r.percent[k] ? ojson(*r.percent[k]) : ojson(nullptr)}};
    }
    arr.push_back({{"name", r.name}, {"memorized", r.memorized}, {"categories", cats}});
  }
  return arr;
}

std::string cohort_csv(const std::vector<CohortRow>& rows) {
  std::string out = "cohort";
  for (auto c : kCategories) out += "," + to_string(c) + "_count," + to_string(c) + "_percent";
  out += ",memorized\n";
  const auto pct = [](const std::optional<double>& p) {
    if (!p) return std::string("NA");
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", *p);
    return std::string(buf);
  };
  for (const auto& r : rows) {
    out += r.name;
    for (auto c : kCategories) {
      const auto k = static_cast<std::size_t>(c);
      out += "," + std::to_string(r.counts[k]) + "," + pct(r.percent[k]);
    }
    out += "," + std::to_string(r.memorized) + "\n";
  }
  return out;
}

void run_command(const std::string& command, const RunConfig& cfg) {
  const auto threads = cfg.get<int>("/threads");
  if (threads > 0) set_threads(threads);
  using Fn = void (*)(const RunConfig&, Staging&);
  static const std::map<std::string, Fn> stages = {
      {"synth", stage_synth},       {"index", stage_index}, {"featurize", stage_featurize},
      {"taxonomy", stage_taxonomy}, {"stats", stage_stats}, {"train", stage_train},
      {"evaluate", stage_evaluate}, {"cohort", stage_cohort}};
  const auto it = stages.find(command);
  if (it == stages.end()) throw ConfigError("unknown command '" + command + "'");
  Staging staging(cfg.output_dir, command);
  it->second(cfg, staging);
  staging.promote();
}

}  // namespace memtax
