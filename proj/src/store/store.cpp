#include "narrator/store.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "narrator/error.hpp"
#include "narrator/game.hpp"

namespace narrator::store {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr int kSchema = 1;

json event_to_json(const ProtocolEvent& e) {
  return {{"type", "event"},
          {"role", to_string(e.role)},
          {"text", e.text},
          {"turn_index", e.turn_index},
          {"timestamp", format_timestamp(e.timestamp)},
          {"rejected", e.rejected}};
}

ProtocolEvent event_from_json(const json& j) {
  ProtocolEvent e;
  e.role = parse_event_role(j.at("role").get<std::string>());
  e.text = j.at("text").get<std::string>();
  e.turn_index = j.at("turn_index").get<int>();
  e.timestamp = parse_timestamp(j.at("timestamp").get<std::string>());
  e.rejected = j.value("rejected", false);
  return e;
}

json header_to_json(const SessionMeta& m) {
  return {{"type", "header"},          {"schema", kSchema},
          {"session_id", m.session_id}, {"model_label", m.model_label},
          {"sheet_id", m.sheet_id},     {"option_count", m.option_count},
          {"started_at", format_timestamp(m.started_at)}};
}

SessionMeta header_from_json(const json& j) {
  if (j.at("type") != "header") throw ParseError("first line is not a header");
  if (j.at("schema").get<int>() != kSchema) throw ParseError("unsupported schema " + j.at("schema").dump());
  SessionMeta m;
  m.session_id = j.at("session_id").get<std::string>();
  m.model_label = j.at("model_label").get<std::string>();
  m.sheet_id = j.at("sheet_id").get<std::string>();
  m.option_count = j.at("option_count").get<int>();
  m.started_at = parse_timestamp(j.at("started_at").get<std::string>());
  return m;
}

json record_to_json(const ProtocolRecord& r) {
  json events = json::array();
  for (const auto& e : r.events) {
    json j = event_to_json(e);
    j.erase("type");
    events.push_back(std::move(j));
  }
  return {{"session_id", r.meta.session_id},
          {"model_label", r.meta.model_label},
          {"sheet_id", r.meta.sheet_id},
          {"option_count", r.meta.option_count},
          {"started_at", format_timestamp(r.meta.started_at)},
          {"ended_at", format_timestamp(r.ended_at)},
          {"validity", to_string(r.validity)},
          {"user_response_count", r.user_response_count},
          {"note", r.note ? json(*r.note) : json(nullptr)},
          {"events", std::move(events)}};
}

struct ParsedFile {
  SessionMeta meta;
  std::vector<ProtocolEvent> events;
  std::optional<ProtocolRecord> record;  // set when a final line is present
};

ParsedFile read_session_file(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw StorageError("cannot open " + file.string());
  ParsedFile out;
  std::string line;
  std::size_t line_no = 0;
  try {
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      if (out.record) throw ParseError("content after final line");
      const json j = json::parse(line);
      if (line_no == 1) {
        out.meta = header_from_json(j);
        continue;
      }
      const std::string type = j.at("type").get<std::string>();
      if (type == "event") {
        out.events.push_back(event_from_json(j));
      } else if (type == "final") {
        ProtocolRecord r;
        r.meta = out.meta;
        r.events = out.events;
        r.validity = parse_validity(j.at("validity").get<std::string>());
        r.user_response_count = j.at("user_response_count").get<int>();
        r.ended_at = parse_timestamp(j.at("ended_at").get<std::string>());
        if (!j.at("note").is_null()) r.note = j.at("note").get<std::string>();
        if (r.user_response_count != count_user_responses(r.events)) {
          throw ParseError("user_response_count does not match events");
        }
        out.record = std::move(r);
      } else {
        throw ParseError("unknown line type '" + type + "'");
      }
    }
  } catch (const json::exception& e) {
    throw ParseError(file.filename().string() + " line " + std::to_string(line_no) + ": " + e.what(), line_no);
  } catch (const ParseError& e) {
    throw ParseError(file.filename().string() + " line " + std::to_string(line_no) + ": " + e.what(), line_no);
  }
  if (line_no == 0) throw ParseError(file.filename().string() + ": empty session file");
  return out;
}

void write_all(int fd, const std::string& data, const fs::path& file) {
  std::size_t off = 0;
  while (off < data.size()) {
    const ssize_t n = ::write(fd, data.data() + off, data.size() - off);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw StorageError("write " + file.string() + ": " + std::strerror(errno));
    }
    off += static_cast<std::size_t>(n);
  }
}

bool valid_id(const std::string& id) {
  return !id.empty() && std::all_of(id.begin(), id.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_';
  });
}

}  // namespace

int count_user_responses(std::span<const ProtocolEvent> events) {
  return static_cast<int>(
      std::count_if(events.begin(), events.end(), [](const ProtocolEvent& e) { return e.role == EventRole::player; }));
}

Validity classify(Validity requested, std::span<const ProtocolEvent> events) {
  if (requested == Validity::invalid_refusal) return requested;
  if (count_user_responses(events) == 0) {
    const bool has_intro = std::any_of(events.begin(), events.end(), [](const ProtocolEvent& e) {
      return e.role == EventRole::narrator && !e.rejected;
    });
    return has_intro ? Validity::intro_only : Validity::invalid_technical;
  }
  return requested == Validity::intro_only ? Validity::valid : requested;
}

bool CorpusFilter::matches(const ProtocolRecord& r) const {
  if (!model_labels.empty() &&
      std::find(model_labels.begin(), model_labels.end(), r.meta.model_label) == model_labels.end()) {
    return false;
  }
  if (validity && r.validity != *validity) return false;
  if (min_responses && r.user_response_count < *min_responses) return false;
  if (started_from && r.meta.started_at < *started_from) return false;
  if (started_before && !(r.meta.started_at < *started_before)) return false;
  return true;
}

// ---------------------------------------------------------------------------

ProtocolStore::ProtocolStore(fs::path root, Clock clock) : root_(std::move(root)), clock_(std::move(clock)) {
  std::error_code ec;
  fs::create_directories(root_ / "sessions", ec);
  if (ec) throw StorageError("cannot create store at " + root_.string() + ": " + ec.message());
}

fs::path ProtocolStore::session_file(const std::string& id) const {
  if (!valid_id(id)) throw ValidationError("invalid session id '" + id + "'");
  return root_ / "sessions" / (id + ".jsonl");
}

void ProtocolStore::append_line(const fs::path& file, const std::string& line) {
  const int fd = ::open(file.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd < 0) throw StorageError("open " + file.string() + ": " + std::strerror(errno));
  try {
    write_all(fd, line + "\n", file);
    if (::fsync(fd) != 0) throw StorageError("fsync " + file.string() + ": " + std::strerror(errno));
  } catch (...) {
    ::close(fd);
    throw;
  }
  ::close(fd);
}

ProtocolStore::OpenSession& ProtocolStore::open_locked(const SessionMeta& meta) {
  auto it = open_.find(meta.session_id);
  if (it != open_.end()) return it->second;
  const fs::path file = session_file(meta.session_id);
  OpenSession os;
  if (fs::exists(file)) {
    ParsedFile parsed = read_session_file(file);
    os.meta = parsed.meta;
    os.events = std::move(parsed.events);
    os.finalized = parsed.record.has_value();
  } else {
    os.meta = meta;
    append_line(file, header_to_json(meta).dump());
  }
  return open_.emplace(meta.session_id, std::move(os)).first->second;
}

void ProtocolStore::append_event(const SessionMeta& meta, const ProtocolEvent& event) {
  std::lock_guard lock(mutex_);
  OpenSession& os = open_locked(meta);
  if (os.finalized) throw StateError("session " + meta.session_id + " is finalized");
  if (!os.events.empty() && event.timestamp < os.events.back().timestamp) {
    throw ValidationError("session " + meta.session_id + ": event timestamp goes backwards");
  }
  append_line(session_file(meta.session_id), event_to_json(event).dump());
  os.events.push_back(event);
}

void ProtocolStore::close_session(const std::string& session_id, Validity validity, std::optional<std::string> note) {
  finalize(session_id, validity, std::move(note));
}

ProtocolRecord ProtocolStore::finalize(const std::string& session_id, Validity validity,
                                       std::optional<std::string> note) {
  std::lock_guard lock(mutex_);
  auto it = open_.find(session_id);
  if (it == open_.end()) {
    const fs::path file = session_file(session_id);
    if (!fs::exists(file)) throw NotFoundError("unknown session " + session_id);
    SessionMeta probe;
    probe.session_id = session_id;
    open_locked(probe);
    it = open_.find(session_id);
  }
  OpenSession& os = it->second;
  if (os.finalized) throw StateError("session " + session_id + " is already finalized");
  if (os.events.empty()) throw ValidationError("session " + session_id + " has no events");

  ProtocolRecord r;
  r.meta = os.meta;
  r.events = os.events;
  r.user_response_count = count_user_responses(r.events);
  r.validity = classify(validity, r.events);
  r.note = std::move(note);
  r.ended_at = std::max(clock_(), r.events.back().timestamp);

  const json final_line = {{"type", "final"},
                           {"validity", to_string(r.validity)},
                           {"user_response_count", r.user_response_count},
                           {"ended_at", format_timestamp(r.ended_at)},
                           {"note", r.note ? json(*r.note) : json(nullptr)}};
  append_line(session_file(session_id), final_line.dump());
  const json index_line = {{"session_id", session_id},
                           {"model_label", r.meta.model_label},
                           {"validity", to_string(r.validity)},
                           {"started_at", format_timestamp(r.meta.started_at)},
                           {"user_response_count", r.user_response_count}};
  append_line(root_ / "index.jsonl", index_line.dump());
  open_.erase(it);
  return r;
}

std::optional<ProtocolRecord> ProtocolStore::load(const std::string& session_id) const {
  const fs::path file = session_file(session_id);
  if (!fs::exists(file)) return std::nullopt;
  return read_session_file(file).record;
}

std::vector<ProtocolRecord> ProtocolStore::load_corpus(const CorpusFilter& filter, LoadReport* report) const {
  LoadReport local;
  LoadReport& rep = report ? *report : local;
  std::vector<ProtocolRecord> out;
  std::set<std::string> indexed;

  std::ifstream index(root_ / "index.jsonl", std::ios::binary);
  std::string line;
  std::size_t line_no = 0;
  while (index && std::getline(index, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::string id;
    try {
      id = json::parse(line).at("session_id").get<std::string>();
    } catch (const json::exception& e) {
      ++rep.corrupt;
      rep.warnings.push_back("index line " + std::to_string(line_no) + ": " + e.what());
      continue;
    }
    if (!indexed.insert(id).second) continue;
    try {
      auto parsed = read_session_file(session_file(id));
      if (!parsed.record) throw ParseError("indexed session " + id + " has no final line");
      if (filter.matches(*parsed.record)) out.push_back(std::move(*parsed.record));
    } catch (const Error& e) {
      ++rep.corrupt;
      rep.warnings.push_back(e.what());
    }
  }

  std::error_code ec;
  for (const auto& entry : fs::directory_iterator(root_ / "sessions", ec)) {
    const std::string name = entry.path().filename().string();
    if (name.size() < 6 || name.substr(name.size() - 6) != ".jsonl" || name.find(".critiques.") != std::string::npos) {
      continue;
    }
    if (!indexed.count(name.substr(0, name.size() - 6))) ++rep.unfinalized;
  }

  std::sort(out.begin(), out.end(), [](const ProtocolRecord& a, const ProtocolRecord& b) {
    if (a.meta.started_at != b.meta.started_at) return a.meta.started_at < b.meta.started_at;
    return a.meta.session_id < b.meta.session_id;
  });
  return out;
}

void ProtocolStore::save_critique(const std::string& session_id, const CritiqueRecord& c) {
  std::lock_guard lock(mutex_);
  const fs::path file = root_ / "sessions" / (session_id + ".critiques.jsonl");
  if (!valid_id(session_id) || !fs::exists(session_file(session_id))) {
    throw NotFoundError("unknown session " + session_id);
  }
  const json j = {{"critic_label", c.critic_label},
                  {"instruction", c.instruction},
                  {"text", c.text},
                  {"self_critique", c.self_critique},
                  {"created_at", format_timestamp(c.created_at)}};
  append_line(file, j.dump());
}

std::vector<CritiqueRecord> ProtocolStore::critiques(const std::string& session_id) const {
  std::vector<CritiqueRecord> out;
  if (!valid_id(session_id)) return out;
  std::ifstream in(root_ / "sessions" / (session_id + ".critiques.jsonl"), std::ios::binary);
  std::string line;
  while (in && std::getline(in, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    out.push_back({j.at("critic_label").get<std::string>(), j.at("instruction").get<std::string>(),
                   j.at("text").get<std::string>(), j.at("self_critique").get<bool>(),
                   parse_timestamp(j.at("created_at").get<std::string>())});
  }
  return out;
}

// ---------------------------------------------------------------------------

CorpusSummary summarize(std::span<const ProtocolRecord> records, int threshold,
                        const std::vector<std::string>& model_order) {
  CorpusSummary s;
  s.threshold = threshold;
  s.total = records.size();
  for (auto v : {Validity::valid, Validity::invalid_technical, Validity::invalid_refusal, Validity::intro_only}) {
    s.per_validity[v] = 0;
  }
  std::map<std::string, ModelUsage> usage;
  std::vector<int> counts;
  for (const auto& r : records) {
    ++s.per_validity[r.validity];
    auto& u = usage[r.meta.model_label];
    u.model_label = r.meta.model_label;
    ++u.all;
    if (r.user_response_count >= threshold) ++u.at_threshold;
    if (r.validity == Validity::valid && r.user_response_count >= 1) counts.push_back(r.user_response_count);
  }
  for (const auto& label : model_order) {
    auto it = usage.find(label);
    s.per_model.push_back(it == usage.end() ? ModelUsage{label, 0, 0} : it->second);
    if (it != usage.end()) usage.erase(it);
  }
  for (auto& [label, u] : usage) s.per_model.push_back(u);

  // Sorting makes the floating-point sums independent of record order.
  std::sort(counts.begin(), counts.end());
  s.interaction_n = counts.size();
  if (!counts.empty()) {
    double sum = 0.0;
    for (int c : counts) sum += c;
    const double mean = sum / counts.size();
    s.interaction_mean = mean;
    s.interaction_max = counts.back();
    if (counts.size() > 1) {
      double ss = 0.0;
      for (int c : counts) ss += (c - mean) * (c - mean);
      s.interaction_sd = std::sqrt(ss / (counts.size() - 1));
    }
  }
  return s;
}

LabeledTexts extract_intros(std::span<const ProtocolRecord> records, const std::vector<std::string>& model_order,
                            IntroOptions options, std::vector<std::string>* warnings) {
  struct Keyed {
    std::size_t group;
    const ProtocolRecord* record;
    std::string text;
  };
  std::vector<Keyed> keyed;
  auto warn = [&](std::string msg) {
    if (warnings) warnings->push_back(std::move(msg));
  };
  for (const auto& r : records) {
    if (r.validity == Validity::invalid_refusal) continue;
    const auto group = std::find(model_order.begin(), model_order.end(), r.meta.model_label);
    if (group == model_order.end()) {
      warn("session " + r.meta.session_id + ": unknown model '" + r.meta.model_label + "'");
      continue;
    }
    const auto intro = std::find_if(r.events.begin(), r.events.end(), [](const ProtocolEvent& e) {
      return e.role == EventRole::narrator && !e.rejected;
    });
    if (intro == r.events.end()) {
      warn("session " + r.meta.session_id + ": no accepted narrator reply");
      continue;
    }
    std::string text;
    if (options.include_options) {
      text = intro->text;
    } else {
      std::istringstream in(intro->text);
      std::string line;
      while (std::getline(in, line)) {
        if (game::match_option_line(line)) continue;
        if (!text.empty()) text += '\n';
        text += line;
      }
      while (!text.empty() && std::isspace(static_cast<unsigned char>(text.back()))) text.pop_back();
    }
    if (text.empty()) {
      warn("session " + r.meta.session_id + ": intro is empty after removing options");
      continue;
    }
    keyed.push_back({static_cast<std::size_t>(group - model_order.begin()), &r, std::move(text)});
  }
  std::stable_sort(keyed.begin(), keyed.end(), [](const Keyed& a, const Keyed& b) {
    if (a.group != b.group) return a.group < b.group;
    if (a.record->meta.started_at != b.record->meta.started_at) {
      return a.record->meta.started_at < b.record->meta.started_at;
    }
    return a.record->meta.session_id < b.record->meta.session_id;
  });
  LabeledTexts out;
  for (auto& k : keyed) out.push_back({k.record->meta.model_label, std::move(k.text), k.record->meta.session_id});
  return out;
}

void export_corpus_json(std::span<const ProtocolRecord> records, const fs::path& file) {
  json doc = {{"schema", "narrator.corpus/1"}, {"records", json::array()}};
  for (const auto& r : records) doc["records"].push_back(record_to_json(r));
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary);
  if (!out) throw StorageError("cannot write " + file.string());
  out << doc.dump(2) << "\n";
}

namespace {

std::string sanitize(const std::string& label) {
  std::string out;
  for (char c : label) out += std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '.' ? c : '_';
  return out.empty() ? "_" : out;
}

}  // namespace

void export_intro_texts(const LabeledTexts& intros, const fs::path& dir) {
  std::map<std::string, int> seq;
  for (const auto& t : intros) {
    const fs::path model_dir = dir / sanitize(t.model_label);
    fs::create_directories(model_dir);
    char name[16];
    std::snprintf(name, sizeof name, "%03d_", ++seq[t.model_label]);
    std::ofstream out(model_dir / (name + t.source_id + ".txt"), std::ios::binary);
    if (!out) throw StorageError("cannot write intro file in " + model_dir.string());
    out << t.text << "\n";
  }
}

}  // namespace narrator::store
