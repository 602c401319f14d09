#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "hyperfeed/core.hpp"

namespace hyperfeed {

/// Label -> weight. Either empty (the all-zero vector) or L1-normalized.
using TopicVector = std::map<std::string, double>;

class LexiconError : public std::runtime_error {
 public:
  LexiconError(std::size_t line, const std::string& message)
      : std::runtime_error("lexicon line " + std::to_string(line) + ": " + message), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Predefined topics and the lowercase keywords that map onto them.
/// Each keyword belongs to exactly one topic.
class TopicLexicon {
 public:
  TopicLexicon() = default;

  /// Parses `topic<TAB>keyword` lines. Blank lines and lines starting with '#' are skipped.
  /// Throws LexiconError naming the line for malformed entries and duplicate keywords.
  static TopicLexicon parse(std::istream& in);
  static TopicLexicon load(const std::string& path);
  /// The built-in eight-topic lexicon (same content as data/lexicon.tsv).
  static const TopicLexicon& builtin();

  /// Adds a keyword. Returns false (and changes nothing) if the keyword is already mapped.
  bool add(const std::string& topic, const std::string& keyword);

  const std::vector<std::string>& topics() const { return topics_; }
  const std::string* topic_of(std::string_view keyword) const;
  /// Keywords of one topic in ascending order.
  std::vector<std::string> keywords_of(const std::string& topic) const;
  std::size_t keyword_count() const { return keyword_topic_.size(); }

 private:
  std::vector<std::string> topics_;
  std::map<std::string, std::string, std::less<>> keyword_topic_;
};

/// Lowercase tokens split on anything that is not an ASCII alphanumeric or a non-ASCII UTF-8 byte.
std::vector<std::string> tokenize(std::string_view text);

/// Body keyword hits count 1, hashtag hits count 2. Result is L1-normalized or empty.
TopicVector analyze(std::string_view description, const std::vector<std::string>& hashtags,
                    const TopicLexicon& lexicon);

struct NewsProfile {
  std::string news_id;
  TopicVector topic_vector;
  std::string dominant_topic;  // empty only if both the vector and the category are empty
  std::string category;
  std::string channel;
  std::vector<std::string> hashtags;
  GeoPoint location;
  Timestamp created_at;
  std::string author_id;
};

/// argmax of the vector with ties to the smallest label; the category when the vector is empty.
std::string dominant_topic(const TopicVector& v, const std::string& category);

NewsProfile build_profile(const NewsItem& item, const TopicLexicon& lexicon);

struct SimilarityWeights {
  double topic = 0.6;
  double category = 0.2;
  double hashtags = 0.2;
};

double cosine(const TopicVector& a, const TopicVector& b);
/// Sorted-range Jaccard. Two empty sets give 0.
double jaccard(const std::vector<std::string>& a, const std::vector<std::string>& b);

double similarity(const NewsProfile& a, const NewsProfile& b, const SimilarityWeights& w = {});

}  // namespace hyperfeed
