#include "ncq/annotation_service.hpp"

#include <httplib.h>

#include <algorithm>
#include <ctime>
#include <fstream>
#include <random>

#include "ncq/assets.hpp"
#include "ncq/text.hpp"

namespace ncq {

using nlohmann::json;

// -------------------------------------------------------------- sentences

SentenceTemplates SentenceTemplates::parse(std::string_view content) {
  SentenceTemplates out;
  size_t lineno = 0;
  for (const auto& raw : text::split_lines(content)) {
    ++lineno;
    const auto line = text::trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const auto cols = text::split(raw, '\t');
    if (cols.size() != 3) throw std::runtime_error("sentence template line " + std::to_string(lineno) + ": expected 3 columns");
    out.patterns_[{text::trim(cols[0]), parse_question_form(cols[1])}] = text::trim(cols[2]);
  }
  return out;
}

SentenceTemplates SentenceTemplates::from_file(const std::string& path) {
  return parse(text::read_file(path));
}

SentenceTemplates SentenceTemplates::defaults() {
  return from_file(asset_path("annotation/sentences.tsv"));
}

std::string SentenceTemplates::render(const RunRecord& record) const {
  auto it = patterns_.find({record.relation, record.form});
  if (it == patterns_.end()) return record.question + " " + record.final_answer + ".";
  return text::replace_all(text::replace_all(it->second, "[head]", record.head), "[answer]", record.final_answer);
}

json BatchItem::to_json() const {
  return json{{"answer_id", answer_id}, {"sentence", sentence}, {"arm", arm}, {"form", to_string(form)}};
}

BatchItem BatchItem::from_json(const json& j) {
  return BatchItem{j.at("answer_id").get<std::string>(), j.at("sentence").get<std::string>(), j.value("arm", ""),
                   parse_question_form(j.value("form", "standard"))};
}

std::vector<BatchItem> build_batch_items(const std::vector<RunRecord>& finals, const SentenceTemplates& sentences,
                                         std::uint64_t seed) {
  std::vector<BatchItem> items;
  for (const auto& r : finals) {
    if (r.no_answer || !r.retained()) continue;
    items.push_back(BatchItem{r.answer_id(), sentences.render(r), r.arm, r.form});
  }
  std::mt19937_64 rng(seed);
  for (size_t i = items.size(); i > 1; --i) {
    const size_t j = static_cast<size_t>(rng() % i);
    std::swap(items[i - 1], items[j]);
  }
  return items;
}

// ------------------------------------------------------------ JSON views

json AnnotationTask::to_json() const {
  json options = json::array();
  for (size_t i = 0; i < kLabelOptions.size(); ++i) {
    options.push_back({{"key", i + 1}, {"label", to_string(kLabelOptions[i])}, {"text", option_text(kLabelOptions[i])}});
  }
  return json{{"batch", batch_id},     {"answer_id", answer_id},          {"sentence", sentence},
              {"options", options},    {"instructions", instructions},    {"annotator", assigned_annotator},
              {"labeled", labeled},    {"required", required}};
}

json BatchProgress::to_json() const {
  return json{{"answers", answers},
              {"complete", complete},
              {"incomplete", incomplete},
              {"labels", labels},
              {"per_annotator", per_annotator}};
}

// ----------------------------------------------------------------- service

namespace {
std::string utc_now() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}
}  // namespace

AnnotationService::AnnotationService(std::string instructions, Options options)
    : instructions_(std::move(instructions)), options_(std::move(options)) {
  if (options_.required_annotators < 1) throw std::invalid_argument("required_annotators must be >= 1");
  if (!options_.clock) options_.clock = utc_now;
}

void AnnotationService::add_batch(const std::string& batch_id, std::vector<BatchItem> items,
                                  const std::filesystem::path& labels_path) {
  auto b = std::make_unique<Batch>();
  b->id = batch_id;
  b->labels_path = labels_path;
  for (size_t i = 0; i < items.size(); ++i) {
    if (!b->index.emplace(items[i].answer_id, i).second) {
      throw std::invalid_argument("duplicate answer id in batch: " + items[i].answer_id);
    }
  }
  b->items = std::move(items);

  std::ifstream in(labels_path);
  std::string line;
  while (in && std::getline(in, line)) {
    if (text::trim(line).empty()) continue;
    auto rec = AnnotationRecord::from_json(json::parse(line));
    if (!b->index.contains(rec.answer_id)) continue;
    if (!b->labeled[rec.answer_id].insert(rec.annotator_id).second) continue;
    b->records.push_back(rec);
    b->record_lines.push_back(line);
  }

  std::lock_guard lock(mu_);
  for (const auto& item : b->items) {
    if (by_answer_.contains(item.answer_id)) throw std::invalid_argument("answer id already served: " + item.answer_id);
  }
  for (const auto& item : b->items) by_answer_[item.answer_id] = b.get();
  batches_.push_back(std::move(b));
}

std::vector<std::string> AnnotationService::batch_ids() const {
  std::lock_guard lock(mu_);
  std::vector<std::string> out;
  for (const auto& b : batches_) out.push_back(b->id);
  return out;
}

AnnotationService::Batch& AnnotationService::batch_for(const std::string& batch_id) {
  return const_cast<Batch&>(std::as_const(*this).batch_for(batch_id));
}

const AnnotationService::Batch& AnnotationService::batch_for(const std::string& batch_id) const {
  if (batch_id.empty()) {
    if (batches_.empty()) throw UnknownBatch("no batches are loaded");
    return *batches_.front();
  }
  for (const auto& b : batches_) {
    if (b->id == batch_id) return *b;
  }
  throw UnknownBatch("unknown batch '" + batch_id + "'");
}

void AnnotationService::expire(Batch& b) {
  const auto now = std::chrono::steady_clock::now();
  std::erase_if(b.reserved, [&](const auto& kv) { return now - kv.second > options_.reservation_ttl; });
}

AnnotationTask AnnotationService::make_task(const Batch& b, size_t idx, const std::string& annotator) const {
  const auto& item = b.items[idx];
  auto it = b.labeled.find(item.answer_id);
  return AnnotationTask{b.id,         item.answer_id, item.sentence, instructions_, annotator,
                        it == b.labeled.end() ? 0 : it->second.size(), options_.required_annotators};
}

std::optional<AnnotationTask> AnnotationService::next_task(const std::string& annotator_id, const std::string& batch_id) {
  if (annotator_id.empty()) throw std::invalid_argument("annotator id must be non-empty");
  std::lock_guard lock(mu_);
  Batch& b = batch_for(batch_id);
  expire(b);

  std::map<std::string, size_t> reservations;
  for (const auto& [key, _] : b.reserved) {
    if (key.second == annotator_id && !b.labeled[key.first].contains(annotator_id)) {
      return make_task(b, b.index.at(key.first), annotator_id);
    }
    ++reservations[key.first];
  }

  std::optional<size_t> best;
  size_t best_count = 0;
  for (size_t i = 0; i < b.items.size(); ++i) {
    const auto& id = b.items[i].answer_id;
    const auto& done = b.labeled[id];
    if (done.contains(annotator_id)) continue;
    const size_t committed = done.size() + reservations[id];
    if (committed >= options_.required_annotators) continue;
    if (!best || done.size() < best_count) {
      best = i;
      best_count = done.size();
    }
  }
  if (!best) return std::nullopt;
  b.reserved[{b.items[*best].answer_id, annotator_id}] = std::chrono::steady_clock::now();
  return make_task(b, *best, annotator_id);
}

SubmitResult AnnotationService::submit_label(const std::string& annotator_id, const std::string& answer_id, Label label) {
  std::lock_guard lock(mu_);
  auto bit = by_answer_.find(answer_id);
  if (bit == by_answer_.end()) return {SubmitStatus::UnknownAnswer, false, "unknown answer id"};
  Batch& b = *bit->second;
  auto& done = b.labeled[answer_id];
  if (done.contains(annotator_id)) {
    return {SubmitStatus::Duplicate, done.size() >= options_.required_annotators, "already labeled by this annotator"};
  }
  auto res = b.reserved.find({answer_id, annotator_id});
  if (res == b.reserved.end()) return {SubmitStatus::NotServed, false, "task was not served to this annotator"};
  if (done.size() >= options_.required_annotators) {
    b.reserved.erase(res);
    return {SubmitStatus::AnswerComplete, true, "answer already has enough labels"};
  }

  AnnotationRecord rec{answer_id, annotator_id, label, options_.clock()};
  const std::string line = rec.to_json().dump();
  {
    std::ofstream out(b.labels_path, std::ios::app | std::ios::binary);
    out << line << '\n';
    out.flush();
    if (!out) throw std::runtime_error("cannot append to " + b.labels_path.string());
  }
  b.reserved.erase(res);
  done.insert(annotator_id);
  b.records.push_back(std::move(rec));
  b.record_lines.push_back(line);
  return {SubmitStatus::Accepted, done.size() >= options_.required_annotators, "stored"};
}

std::vector<AnnotationRecord> AnnotationService::export_labels(const std::string& batch_id) const {
  std::lock_guard lock(mu_);
  return batch_for(batch_id).records;
}

std::string AnnotationService::export_jsonl(const std::string& batch_id) const {
  std::lock_guard lock(mu_);
  std::string out;
  for (const auto& l : batch_for(batch_id).record_lines) out += l + "\n";
  return out;
}

BatchProgress AnnotationService::progress(const std::string& batch_id) const {
  std::lock_guard lock(mu_);
  const Batch& b = batch_for(batch_id);
  BatchProgress p;
  p.answers = b.items.size();
  for (const auto& item : b.items) {
    auto it = b.labeled.find(item.answer_id);
    const size_t n = it == b.labeled.end() ? 0 : it->second.size();
    ++(n >= options_.required_annotators ? p.complete : p.incomplete);
  }
  p.labels = b.records.size();
  for (const auto& r : b.records) ++p.per_annotator[r.annotator_id];
  return p;
}

// ------------------------------------------------------------------ HTTP

struct AnnotationServer::Impl {
  AnnotationService& service;
  Options options;
  httplib::Server server;

  Impl(AnnotationService& s, Options o) : service(s), options(std::move(o)) {}
};

namespace {

void reply_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

constexpr const char* kPlaceholderPage =
    "<!doctype html><html><head><meta charset=\"utf-8\"><title>Annotation</title></head>"
    "<body><p>The annotation UI bundle is not installed. Start the server with --ui &lt;dir&gt;, "
    "or use the JSON API under /api/.</p></body></html>";

}  // namespace

AnnotationServer::AnnotationServer(AnnotationService& service, Options options)
    : impl_(std::make_unique<Impl>(service, std::move(options))) {
  auto& srv = impl_->server;
  Impl* self = impl_.get();

  srv.set_pre_routing_handler([self](const httplib::Request& req, httplib::Response& res) {
    if (self->options.token.empty() || !req.path.starts_with("/api/")) return httplib::Server::HandlerResponse::Unhandled;
    const auto header = req.get_header_value("X-Annotation-Token");
    const auto query = req.get_param_value("token");
    if (header == self->options.token || query == self->options.token) return httplib::Server::HandlerResponse::Unhandled;
    reply_json(res, 401, {{"ok", false}, {"error", "missing or wrong token"}});
    return httplib::Server::HandlerResponse::Handled;
  });

  srv.Get("/api/instructions", [self](const httplib::Request&, httplib::Response& res) {
    res.set_content(self->service.instructions(), "text/plain; charset=utf-8");
  });

  srv.Get("/api/options", [](const httplib::Request&, httplib::Response& res) {
    json options = json::array();
    for (size_t i = 0; i < kLabelOptions.size(); ++i) {
      options.push_back({{"key", i + 1}, {"label", to_string(kLabelOptions[i])}, {"text", option_text(kLabelOptions[i])}});
    }
    reply_json(res, 200, options);
  });

  srv.Get("/api/tasks/next", [self](const httplib::Request& req, httplib::Response& res) {
    const auto annotator = text::trim(req.get_param_value("annotator"));
    if (annotator.empty()) return reply_json(res, 400, {{"ok", false}, {"error", "annotator is required"}});
    try {
      auto task = self->service.next_task(annotator, req.get_param_value("batch"));
      if (!task) return reply_json(res, 200, {{"task", nullptr}, {"done", true}});
      reply_json(res, 200, {{"task", task->to_json()}, {"done", false}});
    } catch (const UnknownBatch& e) {
      reply_json(res, 404, {{"ok", false}, {"error", e.what()}});
    }
  });

  srv.Post("/api/labels", [self](const httplib::Request& req, httplib::Response& res) {
    json body;
    try {
      body = json::parse(req.body);
    } catch (const json::exception&) {
      return reply_json(res, 400, {{"ok", false}, {"error", "body is not JSON"}});
    }
    if (!body.is_object() || !body.contains("annotator") || !body.contains("answer_id") || !body.contains("label")) {
      return reply_json(res, 400, {{"ok", false}, {"error", "expected {annotator, answer_id, label}"}});
    }
    const auto& lab = body["label"];
    auto label = parse_label(lab.is_string() ? lab.get<std::string>() : lab.dump());
    if (!label) return reply_json(res, 400, {{"ok", false}, {"error", "label must be one of the five options"}});
    const auto annotator = body["annotator"].is_string() ? text::trim(body["annotator"].get<std::string>()) : "";
    if (annotator.empty()) return reply_json(res, 400, {{"ok", false}, {"error", "annotator is required"}});
    const auto result = self->service.submit_label(annotator, body["answer_id"].get<std::string>(), *label);
    json out{{"ok", result.status == SubmitStatus::Accepted},
             {"complete", result.answer_complete},
             {"message", result.message}};
    switch (result.status) {
      case SubmitStatus::Accepted: return reply_json(res, 200, out);
      case SubmitStatus::Duplicate: out["error"] = "duplicate"; return reply_json(res, 409, out);
      case SubmitStatus::AnswerComplete: out["error"] = "complete"; return reply_json(res, 409, out);
      case SubmitStatus::UnknownAnswer: out["error"] = "unknown_answer"; return reply_json(res, 404, out);
      case SubmitStatus::NotServed: out["error"] = "not_served"; return reply_json(res, 403, out);
    }
  });

  srv.Get("/api/progress", [self](const httplib::Request& req, httplib::Response& res) {
    try {
      reply_json(res, 200, self->service.progress(req.get_param_value("batch")).to_json());
    } catch (const UnknownBatch& e) {
      reply_json(res, 404, {{"ok", false}, {"error", e.what()}});
    }
  });

  srv.Get("/api/export", [self](const httplib::Request& req, httplib::Response& res) {
    try {
      res.set_content(self->service.export_jsonl(req.get_param_value("batch")), "application/x-ndjson");
    } catch (const UnknownBatch& e) {
      reply_json(res, 404, {{"ok", false}, {"error", e.what()}});
    }
  });

  if (!impl_->options.ui_dir.empty()) {
    if (!srv.set_mount_point("/", impl_->options.ui_dir)) {
      throw std::runtime_error("UI directory not found: " + impl_->options.ui_dir);
    }
  } else {
    srv.Get("/", [](const httplib::Request&, httplib::Response& res) { res.set_content(kPlaceholderPage, "text/html"); });
  }
}

AnnotationServer::~AnnotationServer() {
  stop();
}

int AnnotationServer::bind(const std::string& host, int port) {
  if (port == 0) return impl_->server.bind_to_any_port(host);
  if (!impl_->server.bind_to_port(host, port)) throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
  return port;
}

void AnnotationServer::listen() {
  impl_->server.listen_after_bind();
}

void AnnotationServer::stop() {
  if (impl_) impl_->server.stop();
}

}  // namespace ncq
