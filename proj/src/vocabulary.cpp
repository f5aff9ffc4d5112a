#include "geoseg/spatial/vocabulary.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace geoseg::spatial {

const char* qualifier_name(QualifierKind k) {
  switch (k) {
    case QualifierKind::kNearest: return "nearest";
    case QualifierKind::kFarthest: return "farthest";
    case QualifierKind::kLeftmost: return "leftmost";
    case QualifierKind::kRightmost: return "rightmost";
    case QualifierKind::kTopmost: return "topmost";
    case QualifierKind::kBottommost: return "bottommost";
    case QualifierKind::kCenter: return "center";
    case QualifierKind::kSecondNearest: return "second_nearest";
    case QualifierKind::kSecondFarthest: return "second_farthest";
    case QualifierKind::kSecondLeftmost: return "second_leftmost";
    case QualifierKind::kSecondRightmost: return "second_rightmost";
    case QualifierKind::kSecondTopmost: return "second_topmost";
    case QualifierKind::kSecondBottommost: return "second_bottommost";
    case QualifierKind::kMidDepth: return "mid_depth";
    case QualifierKind::kLargest: return "largest";
    case QualifierKind::kSmallest: return "smallest";
  }
  return "?";
}

const char* relation_name(RelationKind k) {
  switch (k) {
    case RelationKind::kLeftOf: return "left_of";
    case RelationKind::kRightOf: return "right_of";
    case RelationKind::kAbove: return "above";
    case RelationKind::kBelow: return "below";
    case RelationKind::kInFrontOf: return "in_front_of";
    case RelationKind::kBehind: return "behind";
    case RelationKind::kNear: return "near";
    case RelationKind::kOnTopOf: return "on_top_of";
  }
  return "?";
}

namespace {

QualifierKind qualifier_from_name(const std::string& s) {
  for (int i = 0; i <= static_cast<int>(QualifierKind::kSmallest); ++i) {
    const auto k = static_cast<QualifierKind>(i);
    if (s == qualifier_name(k)) return k;
  }
  throw ParseError("vocabulary: unknown qualifier '" + s + "'");
}

RelationKind relation_from_name(const std::string& s) {
  for (int i = 0; i <= static_cast<int>(RelationKind::kOnTopOf); ++i) {
    const auto k = static_cast<RelationKind>(i);
    if (s == relation_name(k)) return k;
  }
  throw ParseError("vocabulary: unknown relation '" + s + "'");
}

}  // namespace

const std::string& canonical_phrase(QualifierKind k) {
  static const std::vector<std::string> canon = {
      "nearest",        "farthest",        "leftmost",        "rightmost",
      "topmost",        "bottommost",      "center",          "second nearest",
      "second farthest", "second leftmost", "second rightmost", "second topmost",
      "second bottommost", "mid-depth",    "largest",         "smallest"};
  return canon[static_cast<int>(k)];
}

const Vocabulary& Vocabulary::builtin() {
  static const Vocabulary vocab = [] {
    Vocabulary v;
    using Q = QualifierKind;
    auto add = [&](Q kind, int idx, std::initializer_list<const char*> phrases) {
      for (const char* p : phrases) v.qualifiers_.push_back({p, kind, idx});
    };
    // base qualifiers, embedding indices 1..7
    add(Q::kNearest, 1, {"nearest", "closest", "close"});
    add(Q::kFarthest, 2, {"farthest", "far", "distant", "furthest"});
    add(Q::kLeftmost, 3, {"leftmost", "left"});
    add(Q::kRightmost, 4, {"rightmost", "right"});
    add(Q::kTopmost, 5, {"topmost", "top", "upper", "uppermost"});
    add(Q::kBottommost, 6, {"bottommost", "bottom", "lower", "lowest"});
    add(Q::kCenter, 7, {"center", "centre", "central", "middle"});
    // ordinal extensions share the base embedding
    add(Q::kSecondNearest, 1, {"second nearest", "second closest"});
    add(Q::kSecondFarthest, 2, {"second farthest"});
    add(Q::kSecondLeftmost, 3, {"second leftmost", "second from left", "second from the left"});
    add(Q::kSecondRightmost, 4,
        {"second rightmost", "second from right", "second from the right"});
    add(Q::kSecondTopmost, 5, {"second topmost", "second from top", "second from the top"});
    add(Q::kSecondBottommost, 6,
        {"second bottommost", "second from bottom", "second from the bottom"});
    add(Q::kMidDepth, 1, {"mid-depth", "mid depth", "middle depth"});
    // size extensions share index 7
    add(Q::kLargest, 7, {"largest", "biggest", "big", "large"});
    add(Q::kSmallest, 7, {"smallest", "small", "tiny"});
    v.sort_by_length();

    using R = RelationKind;
    v.relations_ = {
        {R::kLeftOf, {"to the left of", "on the left of", "left of"}},
        {R::kRightOf, {"to the right of", "on the right of", "right of"}},
        {R::kAbove, {"above", "over"}},
        {R::kBelow, {"below", "under", "beneath"}},
        {R::kInFrontOf, {"in front of"}},
        {R::kBehind, {"behind"}},
        {R::kNear, {"near", "next to", "beside", "by"}},
        {R::kOnTopOf, {"on top of", "on"}},
    };
    return v;
  }();
  return vocab;
}

void Vocabulary::sort_by_length() {
  std::stable_sort(qualifiers_.begin(), qualifiers_.end(),
                   [](const QualifierEntry& a, const QualifierEntry& b) {
                     return a.phrase.size() > b.phrase.size();
                   });
}

int Vocabulary::embedding_index(QualifierKind k) const {
  for (const auto& e : qualifiers_)
    if (e.kind == k) return e.embedding_index;
  return 0;
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw Error("vocabulary: cannot write '" + path + "'");
  out << "geoseg-spatial-vocab v1\n";
  out << "# qualifier|<phrase>|<canonical kind>|<embedding index>\n";
  for (const auto& e : qualifiers_)
    out << "qualifier|" << e.phrase << "|" << qualifier_name(e.kind) << "|" << e.embedding_index
        << "\n";
  out << "# relation|<kind>|<phrase>[;<phrase>...]\n";
  for (const auto& r : relations_) {
    out << "relation|" << relation_name(r.kind) << "|";
    for (std::size_t i = 0; i < r.phrases.size(); ++i) out << (i ? ";" : "") << r.phrases[i];
    out << "\n";
  }
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("vocabulary: cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line) || line != "geoseg-spatial-vocab v1") {
    throw ParseError("vocabulary: '" + path + "' has an unsupported header");
  }
  Vocabulary v;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    std::string tag;
    std::getline(ss, tag, '|');
    if (tag == "qualifier") {
      QualifierEntry e;
      std::string kind, idx;
      std::getline(ss, e.phrase, '|');
      std::getline(ss, kind, '|');
      std::getline(ss, idx, '|');
      e.kind = qualifier_from_name(kind);
      e.embedding_index = std::stoi(idx);
      v.qualifiers_.push_back(std::move(e));
    } else if (tag == "relation") {
      RelationEntry r;
      std::string kind, phrases;
      std::getline(ss, kind, '|');
      std::getline(ss, phrases, '|');
      r.kind = relation_from_name(kind);
      std::istringstream ps(phrases);
      std::string p;
      while (std::getline(ps, p, ';')) r.phrases.push_back(p);
      v.relations_.push_back(std::move(r));
    } else {
      throw ParseError("vocabulary: '" + path + "' has an unknown record '" + tag + "'");
    }
  }
  v.sort_by_length();
  return v;
}

}  // namespace geoseg::spatial
