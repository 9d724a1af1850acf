#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <ostream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "narrator/analytics/embedding_space.hpp"
#include "narrator/analytics/stats.hpp"
#include "narrator/app.hpp"
#include "narrator/error.hpp"

namespace narrator::app {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Embedding cache

namespace {

std::string safe_name(const std::string& s) {
  std::string out;
  for (char c : s) out += std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '.' ? c : '_';
  return out.empty() ? "_" : out;
}

}  // namespace

EmbeddingCache::EmbeddingCache(fs::path dir) : dir_(std::move(dir)) {}

std::string EmbeddingCache::content_hash(std::string_view text) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(text.data(), text.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("sha256 failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned i = 0; i < len; ++i) {
    out += kHex[digest[i] >> 4];
    out += kHex[digest[i] & 15];
  }
  return out;
}

fs::path EmbeddingCache::file_for(const std::string& model_id) const {
  return dir_ / (safe_name(model_id) + ".jsonl");
}

EmbeddingCache::Table& EmbeddingCache::table(const std::string& model_id) const {
  auto [it, inserted] = tables_.try_emplace(model_id);
  if (!inserted) return it->second;
  std::ifstream in(file_for(model_id), std::ios::binary);
  std::string line;
  std::size_t line_no = 0;
  while (in && std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      if (j.at("model_id").get<std::string>() != model_id) continue;
      gateway::EmbeddingVector v;
      v.values = j.at("values").get<std::vector<double>>();
      v.pooling = j.at("pooling") == "mean" ? gateway::Pooling::mean : gateway::Pooling::provider_pooled;
      v.source_model = j.value("source_model", std::string{});
      it->second[j.at("sha256").get<std::string>()] = std::move(v);
    } catch (const json::exception& e) {
      throw ParseError(file_for(model_id).string() + " line " + std::to_string(line_no) + ": " + e.what(), line_no);
    }
  }
  return it->second;
}

std::optional<gateway::EmbeddingVector> EmbeddingCache::get(const std::string& model_id, std::string_view text) const {
  const auto& t = table(model_id);
  auto it = t.find(content_hash(text));
  if (it == t.end()) return std::nullopt;
  return it->second;
}

void EmbeddingCache::put(const std::string& model_id, std::string_view text, const gateway::EmbeddingVector& vec) {
  const std::string hash = content_hash(text);
  auto& t = table(model_id);
  if (t.count(hash)) return;
  fs::create_directories(dir_);
  std::ofstream out(file_for(model_id), std::ios::binary | std::ios::app);
  if (!out) throw StorageError("cannot write " + file_for(model_id).string());
  const json j = {{"model_id", model_id},
                  {"sha256", hash},
                  {"pooling", gateway::to_string(vec.pooling)},
                  {"source_model", vec.source_model},
                  {"values", vec.values}};
  out << j.dump() << "\n";
  if (!out.flush()) throw StorageError("cannot write " + file_for(model_id).string());
  t[hash] = vec;
}

// ---------------------------------------------------------------------------
// Labeled text files

LabeledTexts load_labeled_texts(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw StorageError("cannot read " + file.string());
  json doc;
  try {
    doc = json::parse(in);
    LabeledTexts out;
    const json& items = doc.is_object() ? doc.at("texts") : doc;
    for (const auto& item : items) {
      out.push_back({item.at("model_label").get<std::string>(), item.at("text").get<std::string>(),
                     item.value("source_id", std::to_string(out.size() + 1))});
    }
    return out;
  } catch (const json::exception& e) {
    throw ParseError(file.string() + ": " + e.what());
  }
}

void save_labeled_texts(const LabeledTexts& texts, const fs::path& file) {
  json items = json::array();
  for (const auto& t : texts) items.push_back({{"model_label", t.model_label}, {"source_id", t.source_id}, {"text", t.text}});
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary);
  if (!out) throw StorageError("cannot write " + file.string());
  out << items.dump(2) << "\n";
}

// ---------------------------------------------------------------------------
// Output helpers

namespace {

std::string num(double v) {
  if (v == 0) v = 0;  // no "-0"
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::string num(std::size_t v) { return std::to_string(v); }

std::string opt(const std::optional<double>& v) { return v ? num(*v) : "NA"; }

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

class Csv {
 public:
  Csv(const fs::path& file, std::vector<std::string>& written) : file_(file), out_(file, std::ios::binary) {
    if (!out_) throw StorageError("cannot write " + file.string());
    written.push_back(file);
  }
  ~Csv() { out_.flush(); }

  void row(const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) out_ << (i ? "," : "") << csv_field(fields[i]);
    out_ << "\n";
  }

 private:
  fs::path file_;
  std::ofstream out_;
};

struct Context {
  App& app;
  const AnalyzeOptions& options;
  std::ostream& log;
  std::vector<std::string> written;

  fs::path out(const std::string& name) const { return options.out_dir / name; }
};

std::vector<std::string> model_order(const Config& config, const LabeledTexts& texts) {
  std::vector<std::string> order = config.labels();
  for (const auto& t : texts) {
    if (std::find(order.begin(), order.end(), t.model_label) == order.end()) order.push_back(t.model_label);
  }
  return order;
}

/// Intros grouped by model in configuration order, collection order within a model.
LabeledTexts load_intros(Context& ctx) {
  LabeledTexts texts;
  if (ctx.options.intros_file) {
    texts = load_labeled_texts(*ctx.options.intros_file);
    const auto order = model_order(ctx.app.config(), texts);
    std::stable_sort(texts.begin(), texts.end(), [&](const LabeledText& a, const LabeledText& b) {
      return std::find(order.begin(), order.end(), a.model_label) < std::find(order.begin(), order.end(), b.model_label);
    });
  } else {
    store::LoadReport report;
    const auto records = ctx.app.store().load_corpus({}, &report);
    std::vector<std::string> warnings;
    texts = store::extract_intros(records, ctx.app.config().labels(), {ctx.options.include_options}, &warnings);
    for (const auto& w : report.warnings) ctx.log << "warning: " << w << "\n";
    for (const auto& w : warnings) ctx.log << "warning: " << w << "\n";
  }
  if (texts.empty()) throw ValidationError("no intros to analyze");
  return texts;
}

std::string embedding_key(const gateway::ModelSpec& m) { return m.model_id.empty() ? m.label : m.model_id; }

fs::path cache_dir(const Context& ctx) {
  return ctx.options.cache_dir ? *ctx.options.cache_dir : ctx.app.config().store_path / "embeddings";
}

analytics::Mat<double> cached_matrix(Context& ctx, const LabeledTexts& texts) {
  EmbeddingCache cache(cache_dir(ctx));
  const std::string key = embedding_key(ctx.app.config().embedding_model);
  std::vector<std::vector<double>> rows;
  std::size_t missing = 0;
  for (const auto& t : texts) {
    auto v = cache.get(key, t.text);
    if (!v) {
      ++missing;
      continue;
    }
    rows.push_back(std::move(v->values));
  }
  if (missing > 0) {
    throw Error("no cached embedding for " + std::to_string(missing) + " of " + std::to_string(texts.size()) +
                " intros (model '" + key + "' in " + cache.dir().string() + "); run `analyze embed` first");
  }
  const std::size_t dim = rows.front().size();
  analytics::Mat<double> x(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != dim) {
      throw DomainError("embedding of " + texts[i].source_id + " has dimension " + std::to_string(rows[i].size()) +
                        ", expected " + std::to_string(dim));
    }
    x.row(static_cast<Eigen::Index>(i)) = Eigen::Map<const analytics::Vec<double>>(rows[i].data(), dim).transpose();
  }
  return x;
}

// Subcommands ---------------------------------------------------------------

void run_summary(Context& ctx) {
  store::LoadReport report;
  const auto records = ctx.app.store().load_corpus({}, &report);
  if (records.empty()) throw ValidationError("store holds no finalized protocols");
  const auto s = store::summarize(records, ctx.options.threshold, ctx.app.config().labels());
  {
    Csv csv(ctx.out("summary.csv"), ctx.written);
    csv.row({"metric", "value"});
    csv.row({"protocols", num(s.total)});
    for (const auto& [v, n] : s.per_validity) csv.row({std::string("validity_") + to_string(v), num(n)});
    csv.row({"corrupt", num(report.corrupt)});
    csv.row({"unfinalized", num(report.unfinalized)});
    csv.row({"interaction_n", num(s.interaction_n)});
    csv.row({"interaction_mean", opt(s.interaction_mean)});
    csv.row({"interaction_sd", opt(s.interaction_sd)});
    csv.row({"interaction_max", s.interaction_max ? std::to_string(*s.interaction_max) : "NA"});
    csv.row({"threshold", std::to_string(s.threshold)});
  }
  Csv csv(ctx.out("model_usage.csv"), ctx.written);
  csv.row({"model_label", "protocols", "protocols_at_threshold"});
  for (const auto& u : s.per_model) csv.row({u.model_label, num(u.all), num(u.at_threshold)});
  ctx.log << s.total << " protocols\n";
}

void run_embed(Context& ctx) {
  const LabeledTexts texts = load_intros(ctx);
  EmbeddingCache cache(cache_dir(ctx));
  const auto& model = ctx.app.config().embedding_model;
  const std::string key = embedding_key(model);
  std::size_t fetched = 0;
  std::optional<std::size_t> dim;
  for (const auto& t : texts) {
    auto v = cache.get(key, t.text);
    if (!v) {
      v = ctx.app.gateway().embed(model, t.text);
      cache.put(key, t.text, *v);
      ++fetched;
    }
    if (dim && *dim != v->dim()) throw DomainError("embedding dimension changed from " + std::to_string(*dim));
    dim = v->dim();
  }
  ctx.written.push_back(cache.dir() / (safe_name(key) + ".jsonl"));
  ctx.log << texts.size() << " intros, " << fetched << " fetched, dim " << *dim << "\n";
}

void write_pgm(const fs::path& file, const analytics::Mat<double>& d, std::vector<std::string>& written) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw StorageError("cannot write " + file.string());
  written.push_back(file);
  // Grey level proportional to distance, scaled to the largest entry: black = identical.
  const double top = d.maxCoeff();
  out << "P2\n" << d.cols() << " " << d.rows() << "\n255\n";
  for (Eigen::Index i = 0; i < d.rows(); ++i) {
    for (Eigen::Index j = 0; j < d.cols(); ++j) {
      const int g = top > 0 ? static_cast<int>(std::lround(255.0 * d(i, j) / top)) : 0;
      out << (j ? " " : "") << g;
    }
    out << "\n";
  }
}

void run_dissim(Context& ctx) {
  const LabeledTexts texts = load_intros(ctx);
  const auto x = cached_matrix(ctx, texts);
  const auto d = analytics::dissimilarity_matrix(x);
  {
    Csv csv(ctx.out("dissimilarity.csv"), ctx.written);
    std::vector<std::string> header{"source_id", "model_label"};
    for (const auto& t : texts) header.push_back(t.source_id);
    csv.row(header);
    for (std::size_t i = 0; i < texts.size(); ++i) {
      std::vector<std::string> row{texts[i].source_id, texts[i].model_label};
      for (std::size_t j = 0; j < texts.size(); ++j) row.push_back(num(d(i, j)));
      csv.row(row);
    }
  }
  write_pgm(ctx.out("dissimilarity.pgm"), d, ctx.written);
  ctx.log << d.rows() << "x" << d.cols() << " dissimilarity matrix\n";
}

void write_scatter(const fs::path& file, const LabeledTexts& texts, const analytics::Mat<double>& scores,
                   const std::vector<std::string>& order, std::vector<std::string>& written) {
  static constexpr const char* kColors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                            "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  constexpr double size = 480, pad = 40;
  const Eigen::Index n = scores.rows();
  auto coord = [&](Eigen::Index i, Eigen::Index c) { return c < scores.cols() ? scores(i, c) : 0.0; };
  double lo[2] = {0, 0}, hi[2] = {0, 0};
  for (int c = 0; c < 2; ++c) {
    for (Eigen::Index i = 0; i < n; ++i) {
      lo[c] = std::min(lo[c], coord(i, c));
      hi[c] = std::max(hi[c], coord(i, c));
    }
    if (hi[c] - lo[c] <= 0) {
      lo[c] -= 1;
      hi[c] += 1;
    }
  }
  std::ofstream out(file, std::ios::binary);
  if (!out) throw StorageError("cannot write " + file.string());
  written.push_back(file);
  const std::string w = num(size + 160);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << num(size) << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << num(size / 2) << "\" y=\"" << num(size - 8) << "\" font-size=\"12\">PC1</text>\n";
  out << "<text x=\"8\" y=\"" << num(size / 2) << "\" font-size=\"12\">PC2</text>\n";
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto group = std::find(order.begin(), order.end(), texts[i].model_label) - order.begin();
    const double x = pad + (coord(i, 0) - lo[0]) / (hi[0] - lo[0]) * (size - 2 * pad);
    const double y = size - pad - (coord(i, 1) - lo[1]) / (hi[1] - lo[1]) * (size - 2 * pad);
    out << "<circle cx=\"" << num(std::round(x * 100) / 100) << "\" cy=\"" << num(std::round(y * 100) / 100)
        << "\" r=\"4\" fill=\"" << kColors[group % 10] << "\"><title>" << texts[i].source_id << "</title></circle>\n";
  }
  for (std::size_t g = 0; g < order.size(); ++g) {
    const double y = 24 + 18 * static_cast<double>(g);
    out << "<circle cx=\"" << num(size + 10) << "\" cy=\"" << num(y - 4) << "\" r=\"4\" fill=\"" << kColors[g % 10]
        << "\"/><text x=\"" << num(size + 20) << "\" y=\"" << num(y) << "\" font-size=\"12\">" << order[g]
        << "</text>\n";
  }
  out << "</svg>\n";
}

void run_pca(Context& ctx) {
  const LabeledTexts texts = load_intros(ctx);
  const auto x = cached_matrix(ctx, texts);
  const Eigen::Index k = std::min<Eigen::Index>({3, x.rows() - 1, x.cols()});
  const auto r = analytics::pca(x, k);
  const double total = analytics::total_variance(x);
  {
    Csv csv(ctx.out("pca_scores.csv"), ctx.written);
    std::vector<std::string> header{"model_label", "source_id"};
    for (Eigen::Index c = 0; c < k; ++c) header.push_back("pc" + std::to_string(c + 1));
    csv.row(header);
    for (std::size_t i = 0; i < texts.size(); ++i) {
      std::vector<std::string> row{texts[i].model_label, texts[i].source_id};
      for (Eigen::Index c = 0; c < k; ++c) row.push_back(num(r.scores(static_cast<Eigen::Index>(i), c)));
      csv.row(row);
    }
  }
  {
    Csv csv(ctx.out("pca_variance.csv"), ctx.written);
    csv.row({"component", "explained_variance", "explained_variance_ratio"});
    for (Eigen::Index c = 0; c < k; ++c) {
      csv.row({"pc" + std::to_string(c + 1), num(r.explained_variance(c)), num(r.explained_variance_ratio(c, total))});
    }
  }
  write_scatter(ctx.out("pca_scatter.svg"), texts, r.scores, model_order(ctx.app.config(), texts), ctx.written);
  ctx.log << "pca k=" << k << " over " << x.rows() << "x" << x.cols() << "\n";
}

std::vector<std::string> present_models(const Config& config, const LabeledTexts& texts) {
  std::vector<std::string> out;
  for (const auto& m : model_order(config, texts)) {
    if (std::any_of(texts.begin(), texts.end(), [&](const LabeledText& t) { return t.model_label == m; })) {
      out.push_back(m);
    }
  }
  return out;
}

void run_wordstats(Context& ctx) {
  const LabeledTexts texts = load_intros(ctx);
  const auto models = present_models(ctx.app.config(), texts);
  std::map<std::string, std::vector<double>> counts;
  std::vector<double> all;
  {
    Csv csv(ctx.out("word_counts.csv"), ctx.written);
    csv.row({"model_label", "source_id", "words"});
    for (const auto& t : texts) {
      const std::size_t n = analytics::word_count(t.text);
      counts[t.model_label].push_back(static_cast<double>(n));
      all.push_back(static_cast<double>(n));
      csv.row({t.model_label, t.source_id, num(n)});
    }
  }
  {
    Csv csv(ctx.out("word_stats.csv"), ctx.written);
    csv.row({"model_label", "n", "mean", "sd", "min", "max"});
    auto row = [&](const std::string& label, const std::vector<double>& xs) {
      const auto d = analytics::descriptive(xs);
      csv.row({label, num(d.n), num(d.mean), opt(d.sd), num(d.min), num(d.max)});
    };
    for (const auto& m : models) row(m, counts[m]);
    row("all", all);
  }
  Csv csv(ctx.out("word_tests.csv"), ctx.written);
  csv.row({"model_label", "t", "df", "p_value"});
  for (const auto& m : models) {
    std::vector<double> rest;
    for (const auto& t : texts) {
      if (t.model_label != m) rest.push_back(static_cast<double>(analytics::word_count(t.text)));
    }
    try {
      const auto r = analytics::welch_t_test(counts[m], rest);
      csv.row({m, num(r.statistic), num(r.df.at(0)), num(r.p_value)});
    } catch (const Error& e) {
      csv.row({m, "NA", "NA", "NA"});
      ctx.log << "warning: " << m << " vs rest: " << e.what() << "\n";
    }
  }
  ctx.log << texts.size() << " intros, " << models.size() << " models\n";
}

void run_ner(Context& ctx) {
  const LabeledTexts texts = load_intros(ctx);
  const auto& gaz = ctx.app.gazetteer();
  const auto table = analytics::person_mentions(texts, gaz);
  {
    Csv csv(ctx.out("mentions.csv"), ctx.written);
    std::vector<std::string> header{"model_label", "texts"};
    header.insert(header.end(), table.names.begin(), table.names.end());
    csv.row(header);
    for (const auto& m : present_models(ctx.app.config(), texts)) {
      std::vector<std::string> row{m, num(table.texts_per_model.at(m))};
      for (const auto& name : table.names) row.push_back(num(table.count(m, name)));
      csv.row(row);
    }
    std::vector<std::string> row{"all", num(texts.size())};
    for (const auto& name : table.names) row.push_back(num(table.totals.at(name)));
    csv.row(row);
  }
  Csv csv(ctx.out("unknown_bigrams.csv"), ctx.written);
  csv.row({"bigram", "texts"});
  for (const auto& b : analytics::unknown_capitalized_bigrams(texts, gaz)) csv.row({b.bigram, num(b.texts)});
  ctx.log << texts.size() << " intros, " << table.names.size() << " names\n";
}

void run_sentiment(Context& ctx) {
  const LabeledTexts texts = load_intros(ctx);
  const auto& lex = ctx.app.lexicon();
  const auto cfg = sentiment::SentimentConfig::reference();
  const auto models = present_models(ctx.app.config(), texts);
  std::map<std::string, std::vector<double>> compound;
  std::map<std::string, std::array<std::size_t, 3>> classes;
  {
    Csv csv(ctx.out("sentiment_texts.csv"), ctx.written);
    csv.row({"model_label", "source_id", "neg", "neu", "pos", "compound", "polarity"});
    for (const auto& t : texts) {
      const auto s = sentiment::score(t.text, lex, cfg);
      const auto p = sentiment::classify(s.compound);
      compound[t.model_label].push_back(s.compound);
      ++classes[t.model_label][static_cast<std::size_t>(p)];
      csv.row({t.model_label, t.source_id, num(s.neg), num(s.neu), num(s.pos), num(s.compound),
               sentiment::to_string(p)});
    }
  }
  {
    Csv csv(ctx.out("sentiment_models.csv"), ctx.written);
    csv.row({"model_label", "n", "mean_compound", "sd_compound", "positive", "neutral", "negative"});
    for (const auto& m : models) {
      const auto d = analytics::descriptive(compound[m]);
      const auto& c = classes[m];
      csv.row({m, num(d.n), num(d.mean), opt(d.sd), num(c[0]), num(c[1]), num(c[2])});
    }
  }
  Csv csv(ctx.out("sentiment_anova.csv"), ctx.written);
  csv.row({"statistic", "df_between", "df_within", "p_value"});
  std::vector<std::vector<double>> groups;
  for (const auto& m : models) groups.push_back(compound[m]);
  try {
    const auto r = analytics::one_way_anova(groups);
    csv.row({num(r.statistic), num(r.df.at(0)), num(r.df.at(1)), num(r.p_value)});
    ctx.log << "ANOVA F(" << r.df[0] << "," << r.df[1] << ")=" << r.statistic << ", p=" << r.p_value << "\n";
  } catch (const Error& e) {
    csv.row({"NA", "NA", "NA", "NA"});
    ctx.log << "warning: ANOVA skipped: " << e.what() << "\n";
  }
}

}  // namespace

std::vector<fs::path> analyze(App& app, const std::string& subcommand, const AnalyzeOptions& options,
                              std::ostream& log) {
  Context ctx{app, options, log, {}};
  fs::create_directories(options.out_dir);
  if (subcommand == "summary") run_summary(ctx);
  else if (subcommand == "embed") run_embed(ctx);
  else if (subcommand == "dissim") run_dissim(ctx);
  else if (subcommand == "pca") run_pca(ctx);
  else if (subcommand == "wordstats") run_wordstats(ctx);
  else if (subcommand == "ner") run_ner(ctx);
  else if (subcommand == "sentiment") run_sentiment(ctx);
  else throw ValidationError("unknown analyze subcommand '" + subcommand + "'");
  return {ctx.written.begin(), ctx.written.end()};
}

std::vector<fs::path> export_corpus(App& app, const fs::path& out_dir, bool include_options, std::ostream& log) {
  store::LoadReport report;
  const auto records = app.store().load_corpus({}, &report);
  std::vector<std::string> warnings;
  const auto intros = store::extract_intros(records, app.config().labels(), {include_options}, &warnings);
  for (const auto& w : report.warnings) log << "warning: " << w << "\n";
  for (const auto& w : warnings) log << "warning: " << w << "\n";
  fs::create_directories(out_dir);
  store::export_corpus_json(records, out_dir / "corpus.json");
  save_labeled_texts(intros, out_dir / "intros.json");
  store::export_intro_texts(intros, out_dir / "intros");
  log << records.size() << " protocols, " << intros.size() << " intros\n";
  return {out_dir / "corpus.json", out_dir / "intros.json", out_dir / "intros"};
}

}  // namespace narrator::app
