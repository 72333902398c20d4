#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ncq/evaluation.hpp"
#include "ncq/run_record.hpp"

namespace ncq {

inline constexpr size_t kDefaultRequiredAnnotators = 9;

/// Renders "<head context>. <answer as statement>" per (relation, form).
/// Asset format: relation<TAB>form<TAB>pattern with [head] and [answer].
class SentenceTemplates {
 public:
  static SentenceTemplates parse(std::string_view content);
  static SentenceTemplates from_file(const std::string& path);
  static SentenceTemplates defaults();

  // Falls back to "<question> <answer>." for relations without a template.
  std::string render(const RunRecord& record) const;

 private:
  std::map<std::pair<std::string, QuestionForm>, std::string> patterns_;
};

struct BatchItem {
  std::string answer_id;
  std::string sentence;
  std::string arm;
  QuestionForm form = QuestionForm::Standard;

  nlohmann::json to_json() const;
  static BatchItem from_json(const nlohmann::json& j);
};

/// Retained, answered final records of a run as labeling items, shuffled
/// with `seed` so methods are interleaved.
std::vector<BatchItem> build_batch_items(const std::vector<RunRecord>& finals, const SentenceTemplates& sentences,
                                         std::uint64_t seed);

struct AnnotationTask {
  std::string batch_id;
  std::string answer_id;
  std::string sentence;
  std::string instructions;
  std::string assigned_annotator;
  size_t labeled = 0;
  size_t required = 0;

  nlohmann::json to_json() const;
};

enum class SubmitStatus { Accepted, Duplicate, UnknownAnswer, NotServed, AnswerComplete };

struct SubmitResult {
  SubmitStatus status = SubmitStatus::Accepted;
  bool answer_complete = false;
  std::string message;
};

struct BatchProgress {
  size_t answers = 0;
  size_t complete = 0;
  size_t incomplete = 0;
  size_t labels = 0;
  std::map<std::string, size_t> per_annotator;

  nlohmann::json to_json() const;
};

class UnknownBatch : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Task queue and append-only label store. All operations are serialized on
/// one mutex, so reservation is an atomic check-and-reserve and each
/// (answer, annotator) pair is labeled at most once.
class AnnotationService {
 public:
  using Clock = std::function<std::string()>;

  struct Options {
    size_t required_annotators = kDefaultRequiredAnnotators;
    std::chrono::seconds reservation_ttl{3600};
    Clock clock;  // record timestamps; defaults to UTC wall time
  };

  AnnotationService(std::string instructions, Options options);

  /// Registers a batch backed by `labels_path`; labels already in the file
  /// for this batch's answers are replayed.
  void add_batch(const std::string& batch_id, std::vector<BatchItem> items, const std::filesystem::path& labels_path);

  const std::string& instructions() const { return instructions_; }
  std::vector<std::string> batch_ids() const;

  /// Least-labeled eligible answer not yet labeled by this annotator, or
  /// none. Asking again while holding a reservation returns the same task.
  std::optional<AnnotationTask> next_task(const std::string& annotator_id, const std::string& batch_id = {});
  SubmitResult submit_label(const std::string& annotator_id, const std::string& answer_id, Label label);

  std::vector<AnnotationRecord> export_labels(const std::string& batch_id) const;
  std::string export_jsonl(const std::string& batch_id) const;
  BatchProgress progress(const std::string& batch_id) const;

 private:
  struct Batch {
    std::string id;
    std::vector<BatchItem> items;
    std::map<std::string, size_t> index;
    std::map<std::string, std::set<std::string>> labeled;
    // (answer, annotator) -> reservation time
    std::map<std::pair<std::string, std::string>, std::chrono::steady_clock::time_point> reserved;
    std::vector<AnnotationRecord> records;
    std::vector<std::string> record_lines;
    std::filesystem::path labels_path;
  };

  Batch& batch_for(const std::string& batch_id);
  const Batch& batch_for(const std::string& batch_id) const;
  void expire(Batch& b);
  AnnotationTask make_task(const Batch& b, size_t idx, const std::string& annotator) const;

  std::string instructions_;
  Options options_;
  mutable std::mutex mu_;
  std::vector<std::unique_ptr<Batch>> batches_;
  std::map<std::string, Batch*> by_answer_;
};

/// HTTP+JSON front end:
///   GET  /api/instructions            text/plain
///   GET  /api/options                 the five label options in order
///   GET  /api/tasks/next?annotator=ID[&batch=]
///   POST /api/labels {annotator, answer_id, label}
///   GET  /api/progress?batch=         GET /api/export?batch=
/// Static UI bundle at / when a directory is given.
class AnnotationServer {
 public:
  struct Options {
    std::string token;   // optional shared token (X-Annotation-Token header or ?token=)
    std::string ui_dir;  // static bundle directory
  };

  AnnotationServer(AnnotationService& service, Options options);
  ~AnnotationServer();
  AnnotationServer(const AnnotationServer&) = delete;
  AnnotationServer& operator=(const AnnotationServer&) = delete;

  // Returns the bound port (an ephemeral one when `port` is 0).
  int bind(const std::string& host, int port);
  void listen();  // blocks until stop()
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace ncq
