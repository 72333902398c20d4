#include "ncq/verbalizer.hpp"

#include <algorithm>
#include <set>

#include "ncq/assets.hpp"
#include "ncq/text.hpp"

namespace ncq {

bool is_canonical_relation(std::string_view name) {
  return std::find(kCanonicalRelations.begin(), kCanonicalRelations.end(), name) !=
         kCanonicalRelations.end();
}

std::string_view to_string(QuestionForm form) {
  return form == QuestionForm::Standard ? "standard" : "negated";
}

QuestionForm parse_question_form(std::string_view s) {
  const std::string v = text::to_lower(text::trim(s));
  if (v == "standard") return QuestionForm::Standard;
  if (v == "negated" || v == "negated_complementary" || v == "nc") {
    return QuestionForm::NegatedComplementary;
  }
  throw TemplateError("unknown question form: '" + std::string(s) + "'");
}

bool has_negation_token(std::string_view s) {
  for (const auto& w : text::words(s)) {
    if (w == "not" || w == "cannot" || (w.size() > 3 && w.ends_with("n't"))) return true;
  }
  return false;
}

TemplateRegistry TemplateRegistry::parse(std::string_view content) {
  TemplateRegistry reg;
  size_t lineno = 0;
  for (const auto& raw : text::split_lines(content)) {
    ++lineno;
    const std::string line = text::trim(raw);
    if (line.empty() || line.front() == '#') continue;
    auto cols = text::split(raw, '\t');
    if (cols.size() != 3) {
      throw TemplateError("template asset line " + std::to_string(lineno) +
                          ": expected 3 tab-separated columns");
    }
    reg.register_template(QuestionTemplate{Relation{text::trim(cols[0])},
                                           parse_question_form(cols[1]), text::trim(cols[2])});
  }
  return reg;
}

TemplateRegistry TemplateRegistry::from_file(const std::string& path) {
  return parse(text::read_file(path));
}

TemplateRegistry TemplateRegistry::defaults() {
  return from_file(asset_path("templates.tsv"));
}

void TemplateRegistry::register_template(QuestionTemplate tmpl) {
  const std::string& rel = tmpl.relation.name;
  if (rel.empty()) throw TemplateError("template with empty relation name");
  if (tmpl.pattern.find(kHeadPlaceholder) == std::string::npos) {
    throw TemplateError("template for " + rel + " lacks the [head] placeholder");
  }
  const std::string body = text::replace_all(tmpl.pattern, kHeadPlaceholder, " ");
  const bool negated = has_negation_token(body);
  if (tmpl.form == QuestionForm::NegatedComplementary && !negated) {
    throw TemplateError("negated template for " + rel + " has no negation token");
  }
  if (tmpl.form == QuestionForm::Standard && negated) {
    throw TemplateError("standard template for " + rel + " contains a negation token");
  }
  auto key = std::make_pair(rel, tmpl.form);
  if (templates_.contains(key)) {
    throw TemplateError("duplicate template for (" + rel + ", " + std::string(to_string(tmpl.form)) + ")");
  }
  templates_.emplace(std::move(key), std::move(tmpl));
}

bool TemplateRegistry::has_template(std::string_view relation) const {
  const std::string r(relation);
  return templates_.contains({r, QuestionForm::Standard}) ||
         templates_.contains({r, QuestionForm::NegatedComplementary});
}

bool TemplateRegistry::knows_relation(std::string_view relation) const {
  return is_canonical_relation(relation) || has_template(relation);
}

std::vector<std::string> TemplateRegistry::relations() const {
  std::set<std::string> names;
  for (const auto& [key, _] : templates_) names.insert(key.first);
  return {names.begin(), names.end()};
}

const QuestionTemplate& TemplateRegistry::template_for(const Relation& relation,
                                                       QuestionForm form) const {
  auto it = templates_.find({relation.name, form});
  if (it == templates_.end()) {
    throw TemplateError("no " + std::string(to_string(form)) + " template registered for relation '" +
                        relation.name + "'; registered: " + text::join(relations(), ", "));
  }
  return it->second;
}

VerbalizedQuestion TemplateRegistry::verbalize(const Triple& triple, QuestionForm form,
                                               const VerbalizeOptions& opts) const {
  const auto& tmpl = template_for(triple.relation, form);
  std::string rendered = text::replace_all(tmpl.pattern, kHeadPlaceholder, triple.head);
  if (opts.normalize_punctuation && !rendered.empty()) {
    const char last = rendered.back();
    if (last != '?' && last != '.' && last != '!') rendered.push_back('?');
  }
  return VerbalizedQuestion{triple.id, form, std::move(rendered), triple.relation};
}

std::string TemplateRegistry::version_hash() const {
  std::string buf;
  for (const auto& [key, t] : templates_) {
    buf += key.first;
    buf += '\t';
    buf += to_string(key.second);
    buf += '\t';
    buf += t.pattern;
    buf += '\n';
  }
  return text::sha256_hex(buf);
}

}  // namespace ncq
