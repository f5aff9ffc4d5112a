#pragma once

#include <optional>
#include <string>

#include "geoseg/spatial/vocabulary.hpp"

namespace geoseg::spatial {

struct Qualifier {
  QualifierKind kind;
  int embedding_index;
};

struct Relation {
  std::string target;
  RelationKind kind;
  std::string reference;
};

// A parsed prompt: base class plus at most one of {spatial qualifier,
// relation triple}. embedding_index() is 0 exactly when no qualifier is set.
struct Query {
  std::string raw_text;
  std::string base_noun;
  std::optional<Qualifier> qualifier;
  std::optional<Relation> relation;

  int embedding_index() const { return qualifier ? qualifier->embedding_index : 0; }
};

// Relational patterns first, then longest-prefix qualifier match, then a
// plain base noun. Input is lowercased and whitespace-normalized; empty
// input is a parse error.
Query parse_query(const std::string& text, const Vocabulary& vocab = Vocabulary::builtin());

}  // namespace geoseg::spatial
