#pragma once

#include "stockcast/market_data.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace stockcast::hmm {

/// Token categories; the default vocabulary has V = 7 symbols.
enum Category : int {
    StrongPositive = 0,
    Positive = 1,
    Neutral = 2,
    Negative = 3,
    StrongNegative = 4,
    Numeric = 5,
    Other = 6,
};
inline constexpr std::size_t kDefaultVocabulary = 7;

struct HmmModel {
    std::vector<std::string> labels;  // one per state
    Eigen::MatrixXd A;                // n x n transitions
    Eigen::MatrixXd B;                // n x V emissions
    Eigen::VectorXd pi;               // n

    std::size_t states() const noexcept { return labels.size(); }
    std::size_t vocabulary() const noexcept { return B.cols(); }

    /// Throws ModelError on shape mismatches, negative entries, or rows
    /// that do not sum to 1 within 1e-9.
    void validate() const;
};

std::vector<std::string> default_labels();

/// word -> category id. Unknown words map to Other; all-digit tokens not
/// in the lexicon map to Numeric.
struct Lexicon {
    std::unordered_map<std::string, int> words;
    std::size_t vocabulary = kDefaultVocabulary;

    int lookup(const std::string& token) const;
};

/// `word<TAB>category_id` lines; blank lines and `#` comments are skipped.
Lexicon parse_lexicon(std::string_view text, std::size_t vocabulary = kDefaultVocabulary);

/// Lowercases, drops URLs and @handles, splits on non-alphanumeric runs.
std::vector<std::string> tokenize(std::string_view text);

std::vector<int> encode(std::span<const std::string> tokens, const Lexicon& lexicon);

struct DocumentRecord {
    Date date;
    std::string source;
    std::vector<int> tokens;
};

struct ParsedDocuments {
    std::vector<DocumentRecord> records;
    std::vector<std::size_t> empty_lines;  // 1-based lines with no tokens, skipped
};

/// `date<TAB>source<TAB>raw text` per line.
ParsedDocuments parse_documents(std::string_view text, const Lexicon& lexicon);

struct DecodedPath {
    std::vector<std::size_t> states;
    double log_prob = 0.0;
};

/// Log-space Viterbi. Ties resolve to the lexicographically smallest path.
/// Throws ModelError when the observations have probability zero under
/// every path (for example a symbol no state can emit).
DecodedPath viterbi(const HmmModel& model, std::span<const int> obs);

/// Log-probability of one given state path (may be -inf).
double path_log_prob(const HmmModel& model, std::span<const int> obs, std::span<const std::size_t> states);

struct LabeledSequence {
    std::vector<int> tokens;
    std::vector<std::size_t> states;
};

/// One sequence per line of whitespace-separated `word|label` tokens.
std::vector<LabeledSequence> parse_labeled_corpus(std::string_view text, const Lexicon& lexicon,
                                                  std::span<const std::string> labels);

/// Transition, emission and initial counts with add-one smoothing.
HmmModel supervised_estimate(std::span<const LabeledSequence> corpus, std::vector<std::string> labels,
                             std::size_t vocabulary = kDefaultVocabulary);

struct Segment {
    std::size_t start = 0;
    std::size_t end = 0;  // inclusive
    std::size_t state = 0;

    bool operator==(const Segment&) const = default;
};

/// Maximal constant-state runs of at least `min_run` tokens, in order.
std::vector<Segment> extract_segments(std::span<const std::size_t> path, std::size_t min_run);

struct DailyScore {
    Date date;
    double score = 0.0;

    bool operator==(const DailyScore&) const = default;
};

using SentimentSeries = std::vector<DailyScore>;  // strictly increasing dates

/// (positive tokens - negative tokens) / T of the decoded path. The state
/// roles come from the labels "positive" and "negative".
double score_document(const HmmModel& model, const DocumentRecord& doc);

/// Per-date mean of document scores. When `failed` is given, documents that
/// cannot be decoded are skipped and their indices recorded; otherwise the
/// decoding error propagates.
SentimentSeries score_documents(const HmmModel& model, std::span<const DocumentRecord> docs,
                                std::vector<std::size_t>* failed = nullptr);

/// Most recent score dated within [d - lookback_days, d] for each trading
/// date d, else 0.
std::vector<double> align_sentiment(std::span<const Date> trading_dates, const SentimentSeries& sentiment,
                                    int lookback_days = 3);

std::string serialize_scores(const SentimentSeries& series);
SentimentSeries parse_scores(std::string_view text);

std::string to_text(const HmmModel& model);
HmmModel from_text(std::string_view text);

}  // namespace stockcast::hmm
