#pragma once

#include <string>
#include <vector>

#include "geoseg/errors.hpp"

namespace geoseg::spatial {

enum class QualifierKind {
  kNearest,
  kFarthest,
  kLeftmost,
  kRightmost,
  kTopmost,
  kBottommost,
  kCenter,
  kSecondNearest,
  kSecondFarthest,
  kSecondLeftmost,
  kSecondRightmost,
  kSecondTopmost,
  kSecondBottommost,
  kMidDepth,
  kLargest,
  kSmallest,
};

enum class RelationKind {
  kLeftOf,
  kRightOf,
  kAbove,
  kBelow,
  kInFrontOf,
  kBehind,
  kNear,
  kOnTopOf,
};

const char* qualifier_name(QualifierKind k);
const char* relation_name(RelationKind k);

// The primary phrase of a qualifier ("nearest", "second leftmost", ...).
const std::string& canonical_phrase(QualifierKind k);

struct QualifierEntry {
  std::string phrase;
  QualifierKind kind;
  int embedding_index;  // 1..7; 0 is reserved for no qualifier
};

struct RelationEntry {
  RelationKind kind;
  std::vector<std::string> phrases;  // primary first
};

// 48 qualifier phrases and 8 relation patterns. Qualifier entries are kept
// sorted by phrase length descending so multi-word phrases always win over
// their substrings. Ordinal and size extensions share embedding indices with
// their base category; largest/smallest share index 7.
class Vocabulary {
 public:
  static const Vocabulary& builtin();
  static Vocabulary load(const std::string& path);
  void save(const std::string& path) const;

  const std::vector<QualifierEntry>& qualifiers() const { return qualifiers_; }
  const std::vector<RelationEntry>& relations() const { return relations_; }

  int embedding_index(QualifierKind k) const;

 private:
  Vocabulary() = default;
  void sort_by_length();

  std::vector<QualifierEntry> qualifiers_;
  std::vector<RelationEntry> relations_;
};

}  // namespace geoseg::spatial
