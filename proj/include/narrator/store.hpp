#pragma once

#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "narrator/labeled_texts.hpp"
#include "narrator/protocol.hpp"

namespace narrator::store {

struct ProtocolRecord {
  SessionMeta meta;
  Timestamp ended_at{};
  Validity validity = Validity::valid;
  int user_response_count = 0;
  std::optional<std::string> note;
  std::vector<ProtocolEvent> events;

  const std::string& session_id() const { return meta.session_id; }
  const std::string& model_label() const { return meta.model_label; }
  bool operator==(const ProtocolRecord&) const = default;
};

/// Player events; engine-sent messages (end token, corrective re-asks) do not count.
int count_user_responses(std::span<const ProtocolEvent> events);

/// Applies the intro_only rule to a requested classification.
Validity classify(Validity requested, std::span<const ProtocolEvent> events);

struct CorpusFilter {
  std::vector<std::string> model_labels;  // empty = all
  std::optional<Validity> validity;
  std::optional<int> min_responses;
  std::optional<Timestamp> started_from;   // inclusive
  std::optional<Timestamp> started_before; // exclusive

  bool matches(const ProtocolRecord& r) const;
};

struct LoadReport {
  std::size_t corrupt = 0;      // unreadable session files or index lines
  std::size_t unfinalized = 0;  // sessions without a final record (live or crashed)
  std::vector<std::string> warnings;
};

struct CritiqueRecord {
  std::string critic_label;
  std::string instruction;
  std::string text;
  bool self_critique = false;
  Timestamp created_at{};

  bool operator==(const CritiqueRecord&) const = default;
};

/// Append-only protocol persistence.
///
/// Layout under the root directory:
///   sessions/<id>.jsonl            header, one line per event, final line
///   sessions/<id>.critiques.jsonl  critiques, appended
///   index.jsonl                    one line per finalized session
///
/// Each append is flushed and fsynced before returning. One writer per session;
/// readers only see finalized sessions.
class ProtocolStore final : public ProtocolSink {
 public:
  explicit ProtocolStore(std::filesystem::path root, Clock clock = system_now);

  void append_event(const SessionMeta& meta, const ProtocolEvent& event) override;
  void close_session(const std::string& session_id, Validity validity, std::optional<std::string> note) override;

  ProtocolRecord finalize(const std::string& session_id, Validity validity, std::optional<std::string> note = {});

  /// Finalized records matching `filter`, ordered by (started_at, session_id).
  std::vector<ProtocolRecord> load_corpus(const CorpusFilter& filter = {}, LoadReport* report = nullptr) const;
  std::optional<ProtocolRecord> load(const std::string& session_id) const;

  void save_critique(const std::string& session_id, const CritiqueRecord& critique);
  std::vector<CritiqueRecord> critiques(const std::string& session_id) const;

  const std::filesystem::path& root() const { return root_; }

 private:
  struct OpenSession {
    SessionMeta meta;
    std::vector<ProtocolEvent> events;
    bool finalized = false;
  };

  std::filesystem::path session_file(const std::string& id) const;
  OpenSession& open_locked(const SessionMeta& meta);
  void append_line(const std::filesystem::path& file, const std::string& line);

  std::filesystem::path root_;
  Clock clock_;
  mutable std::mutex mutex_;
  std::map<std::string, OpenSession> open_;
};

struct ModelUsage {
  std::string model_label;
  std::size_t all = 0;
  std::size_t at_threshold = 0;  // protocols with >= threshold user responses
};

struct CorpusSummary {
  std::size_t total = 0;
  std::map<Validity, std::size_t> per_validity;
  std::vector<ModelUsage> per_model;
  int threshold = 5;
  std::optional<double> interaction_mean;  // over valid protocols with >= 1 response
  std::optional<double> interaction_sd;    // sample SD, needs 2 such protocols
  std::optional<int> interaction_max;
  std::size_t interaction_n = 0;
};

/// Per-model rows follow `model_order`; unlisted models come after, sorted by label.
CorpusSummary summarize(std::span<const ProtocolRecord> records, int threshold = 5,
                        const std::vector<std::string>& model_order = {});

struct IntroOptions {
  bool include_options = false;
};

/// First accepted narrator reply of each record, grouped by `model_order`.
/// Records from refusal-aborted sessions or without an accepted reply are skipped.
LabeledTexts extract_intros(std::span<const ProtocolRecord> records, const std::vector<std::string>& model_order,
                            IntroOptions options = {}, std::vector<std::string>* warnings = nullptr);

/// Writes the whole corpus as one JSON document (schema "narrator.corpus/1").
void export_corpus_json(std::span<const ProtocolRecord> records, const std::filesystem::path& file);
/// One directory per model holding one intro text file per record.
void export_intro_texts(const LabeledTexts& intros, const std::filesystem::path& dir);

}  // namespace narrator::store
