#include "hyperfeed/content_analyzer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <sstream>

namespace hyperfeed {

extern const char* const kBuiltinLexiconText;

// ---------------------------------------------------------------------------
// Lexicon

bool TopicLexicon::add(const std::string& topic, const std::string& keyword) {
  if (keyword_topic_.contains(keyword)) return false;
  if (std::find(topics_.begin(), topics_.end(), topic) == topics_.end()) topics_.push_back(topic);
  keyword_topic_.emplace(keyword, topic);
  return true;
}

const std::string* TopicLexicon::topic_of(std::string_view keyword) const {
  const auto it = keyword_topic_.find(keyword);
  return it == keyword_topic_.end() ? nullptr : &it->second;
}

std::vector<std::string> TopicLexicon::keywords_of(const std::string& topic) const {
  std::vector<std::string> out;
  for (const auto& [keyword, owner] : keyword_topic_) {
    if (owner == topic) out.push_back(keyword);
  }
  return out;
}

TopicLexicon TopicLexicon::parse(std::istream& in) {
  TopicLexicon lex;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos) {
      throw LexiconError(line_no, "expected exactly one TAB between topic and keyword");
    }
    const std::string topic = to_lower_utf8(line.substr(0, tab));
    const std::string keyword = to_lower_utf8(line.substr(tab + 1));
    if (topic.empty() || keyword.empty()) throw LexiconError(line_no, "empty topic or keyword");
    const auto tokens = tokenize(keyword);
    if (tokens.size() != 1 || tokens.front() != keyword) {
      throw LexiconError(line_no, "keyword '" + keyword + "' is not a single token");
    }
    if (const std::string* owner = lex.topic_of(keyword)) {
      throw LexiconError(line_no, "duplicate keyword '" + keyword + "' (already mapped to '" + *owner + "')");
    }
    lex.add(topic, keyword);
  }
  return lex;
}

TopicLexicon TopicLexicon::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open lexicon file " + path);
  return parse(in);
}

const TopicLexicon& TopicLexicon::builtin() {
  static const TopicLexicon lex = [] {
    std::istringstream in(kBuiltinLexiconText);
    return parse(in);
  }();
  return lex;
}

// ---------------------------------------------------------------------------
// Tokenizer

namespace {

// Decodes one code point at `i` and advances `i`. Malformed bytes decode as themselves.
char32_t next_code_point(std::string_view s, std::size_t& i) {
  const auto b0 = static_cast<unsigned char>(s[i]);
  std::size_t len = 1;
  char32_t cp = b0;
  if (b0 >= 0xF0 && b0 < 0xF8) {
    len = 4;
    cp = b0 & 0x07;
  } else if (b0 >= 0xE0) {
    len = 3;
    cp = b0 & 0x0F;
  } else if (b0 >= 0xC0) {
    len = 2;
    cp = b0 & 0x1F;
  }
  if (len > 1) {
    if (i + len > s.size()) {
      ++i;
      return b0;
    }
    for (std::size_t k = 1; k < len; ++k) {
      const auto b = static_cast<unsigned char>(s[i + k]);
      if ((b & 0xC0) != 0x80) {
        ++i;
        return b0;
      }
      cp = (cp << 6) | (b & 0x3F);
    }
  }
  i += len;
  return cp;
}

bool is_word_code_point(char32_t cp) {
  if (cp < 0x80) return (cp >= '0' && cp <= '9') || (cp >= 'a' && cp <= 'z') || (cp >= 'A' && cp <= 'Z');
  if (cp < 0xC0) return cp == 0xAA || cp == 0xB5 || cp == 0xBA;
  if (cp == 0xD7 || cp == 0xF7) return false;
  if (cp >= 0x2000 && cp <= 0x2BFF) return false;  // punctuation, symbols, arrows, box drawing
  if (cp >= 0x3000 && cp <= 0x303F) return false;  // CJK punctuation
  if (cp >= 0xFE30 && cp <= 0xFE4F) return false;
  if (cp >= 0xFF00 && cp <= 0xFF0F) return false;
  if (cp >= 0x1F000 && cp <= 0x1FAFF) return false;  // emoji
  return true;
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  const std::string lowered = to_lower_utf8(text);
  std::vector<std::string> tokens;
  std::string current;
  std::size_t i = 0;
  while (i < lowered.size()) {
    const std::size_t start = i;
    const char32_t cp = next_code_point(lowered, i);
    if (is_word_code_point(cp)) {
      current.append(lowered, start, i - start);
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

// ---------------------------------------------------------------------------
// Analysis

TopicVector analyze(std::string_view description, const std::vector<std::string>& hashtags,
                    const TopicLexicon& lexicon) {
  std::map<std::string, double> counts;
  for (const auto& token : tokenize(description)) {
    if (const std::string* topic = lexicon.topic_of(token)) counts[*topic] += 1.0;
  }
  for (const auto& tag : hashtags) {
    std::string t = to_lower_utf8(tag);
    if (!t.empty() && t.front() == '#') t.erase(0, 1);
    if (const std::string* topic = lexicon.topic_of(t)) counts[*topic] += 2.0;
  }
  double total = 0.0;
  for (const auto& [_, c] : counts) total += c;
  if (total == 0.0) return {};
  for (auto& [_, c] : counts) c /= total;
  return counts;
}

std::string dominant_topic(const TopicVector& v, const std::string& category) {
  if (v.empty()) return category;
  // std::map iterates labels in ascending order, so the first strict maximum is the smallest label.
  const std::string* best = nullptr;
  double best_w = -1.0;
  for (const auto& [label, w] : v) {
    if (w > best_w) {
      best = &label;
      best_w = w;
    }
  }
  return *best;
}

NewsProfile build_profile(const NewsItem& item, const TopicLexicon& lexicon) {
  NewsProfile p;
  p.news_id = item.id;
  p.topic_vector = analyze(item.description, item.hashtags, lexicon);
  p.dominant_topic = dominant_topic(p.topic_vector, item.category);
  p.category = item.category;
  p.channel = item.channel;
  p.hashtags = item.hashtags;
  p.location = item.location;
  p.created_at = item.created_at;
  p.author_id = item.author_id;
  return p;
}

// ---------------------------------------------------------------------------
// Similarity

double cosine(const TopicVector& a, const TopicVector& b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (const auto& [label, w] : a) {
    na += w * w;
    if (const auto it = b.find(label); it != b.end()) dot += w * it->second;
  }
  for (const auto& [_, w] : b) nb += w * w;
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(dot / std::sqrt(na * nb), 0.0, 1.0);
}

double jaccard(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  if (a.empty() && b.empty()) return 0.0;
  std::size_t inter = 0;
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() && ib != b.end()) {
    if (*ia < *ib) {
      ++ia;
    } else if (*ib < *ia) {
      ++ib;
    } else {
      ++inter;
      ++ia;
      ++ib;
    }
  }
  const std::size_t uni = a.size() + b.size() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

double similarity(const NewsProfile& a, const NewsProfile& b, const SimilarityWeights& w) {
  const double same_category = a.category == b.category ? 1.0 : 0.0;
  return w.topic * cosine(a.topic_vector, b.topic_vector) + w.category * same_category +
         w.hashtags * jaccard(a.hashtags, b.hashtags);
}

}  // namespace hyperfeed
