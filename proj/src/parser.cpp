#include "geoseg/spatial/parser.hpp"

#include <algorithm>
#include <cctype>

namespace geoseg::spatial {

namespace {

std::string normalize(const std::string& text) {
  std::string out;
  out.reserve(text.size());
  bool in_space = true;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!in_space && !out.empty()) out.push_back(' ');
      in_space = true;
    } else {
      out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
      in_space = false;
    }
  }
  while (!out.empty() && out.back() == ' ') out.pop_back();
  return out;
}

std::string strip_article(std::string s) {
  for (const char* art : {"the ", "a ", "an "}) {
    if (s.rfind(art, 0) == 0) {
      s = s.substr(std::string(art).size());
      break;
    }
  }
  return s;
}

// Matches "<target> <phrase> <reference>" on word boundaries, preferring the
// earliest occurrence of the phrase.
std::optional<std::pair<std::string, std::string>> split_on_phrase(const std::string& text,
                                                                   const std::string& phrase) {
  const std::string needle = " " + phrase + " ";
  const auto pos = text.find(needle);
  if (pos == std::string::npos || pos == 0) return std::nullopt;
  std::string target = text.substr(0, pos);
  std::string reference = text.substr(pos + needle.size());
  if (target.empty() || reference.empty()) return std::nullopt;
  return std::make_pair(strip_article(std::move(target)), strip_article(std::move(reference)));
}

}  // namespace

Query parse_query(const std::string& text, const Vocabulary& vocab) {
  const std::string norm = normalize(text);
  if (norm.empty()) throw ParseError("parse_query: empty prompt");

  Query q;
  q.raw_text = text;

  // relational patterns first; within the list, multi-word phrases run
  // before shorter ones and the bare "on" runs last so it never swallows
  // "on the left of" or "on top of"
  struct Pattern {
    RelationKind kind;
    std::string phrase;
  };
  std::vector<Pattern> patterns, bare_on;
  for (const auto& rel : vocab.relations()) {
    for (const auto& p : rel.phrases) {
      (p == "on" ? bare_on : patterns).push_back({rel.kind, p});
    }
  }
  std::stable_sort(patterns.begin(), patterns.end(), [](const Pattern& a, const Pattern& b) {
    return a.phrase.size() > b.phrase.size();
  });
  patterns.insert(patterns.end(), bare_on.begin(), bare_on.end());
  for (const auto& p : patterns) {
    if (auto parts = split_on_phrase(norm, p.phrase)) {
      q.base_noun = parts->first;
      q.relation = Relation{parts->first, p.kind, parts->second};
      return q;
    }
  }

  // longest-prefix qualifier match
  for (const auto& e : vocab.qualifiers()) {
    if (norm.size() > e.phrase.size() && norm.rfind(e.phrase + " ", 0) == 0) {
      q.base_noun = strip_article(norm.substr(e.phrase.size() + 1));
      q.qualifier = Qualifier{e.kind, e.embedding_index};
      return q;
    }
  }

  q.base_noun = strip_article(norm);
  if (q.base_noun.empty()) throw ParseError("parse_query: no base noun in '" + text + "'");
  return q;
}

}  // namespace geoseg::spatial
