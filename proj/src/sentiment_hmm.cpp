#include "stockcast/sentiment_hmm.hpp"

#include "stockcast/errors.hpp"
#include "stockcast/io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>

namespace stockcast::hmm {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

std::vector<std::string_view> split_lines(std::string_view text) {
    std::vector<std::string_view> lines;
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        auto line = text.substr(pos, end - pos);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        lines.push_back(line);
        pos = end + 1;
    }
    return lines;
}

std::vector<std::string_view> split(std::string_view line, char sep) {
    std::vector<std::string_view> out;
    std::size_t s = 0;
    while (true) {
        const auto p = line.find(sep, s);
        out.push_back(line.substr(s, p == std::string_view::npos ? p : p - s));
        if (p == std::string_view::npos) break;
        s = p + 1;
    }
    return out;
}

std::vector<std::string_view> split_ws(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        std::size_t j = i;
        while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
        if (j > i) out.push_back(line.substr(i, j - i));
        i = j;
    }
    return out;
}

std::string lower(std::string_view s) {
    std::string out(s);
    for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

bool starts_with_ci(std::string_view s, std::string_view prefix) {
    return s.size() >= prefix.size() && lower(s.substr(0, prefix.size())) == prefix;
}

double safe_log(double p) { return p > 0.0 ? std::log(p) : kNegInf; }

std::size_t state_index(const HmmModel& model, std::string_view label) {
    const auto it = std::find(model.labels.begin(), model.labels.end(), label);
    if (it == model.labels.end()) throw ModelError("model has no '" + std::string(label) + "' state");
    return static_cast<std::size_t>(it - model.labels.begin());
}

void check_row_stochastic(const Eigen::MatrixXd& m, std::string_view name) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        if ((m.row(r).array() < 0.0).any() || !m.row(r).allFinite()) {
            throw ModelError(std::string(name) + " row " + std::to_string(r) + " has invalid entries");
        }
        if (std::abs(m.row(r).sum() - 1.0) > 1e-9) {
            throw ModelError(std::string(name) + " row " + std::to_string(r) + " does not sum to 1");
        }
    }
}

}  // namespace

void HmmModel::validate() const {
    const auto n = static_cast<Eigen::Index>(labels.size());
    if (n < 2) throw ModelError("an HMM needs at least two states");
    if (A.rows() != n || A.cols() != n) throw ModelError("transition matrix must be n x n");
    if (B.rows() != n || B.cols() < 1) throw ModelError("emission matrix must be n x V with V >= 1");
    if (pi.size() != n) throw ModelError("initial distribution must have n entries");
    check_row_stochastic(A, "transition");
    check_row_stochastic(B, "emission");
    check_row_stochastic(pi.transpose(), "initial distribution");
}

std::vector<std::string> default_labels() { return {"positive", "negative", "neutral"}; }

int Lexicon::lookup(const std::string& token) const {
    const auto it = words.find(token);
    if (it != words.end()) return it->second;
    if (!token.empty() && std::all_of(token.begin(), token.end(), [](unsigned char c) { return std::isdigit(c); })) {
        return Numeric < static_cast<int>(vocabulary) ? Numeric : static_cast<int>(vocabulary) - 1;
    }
    return Other < static_cast<int>(vocabulary) ? Other : static_cast<int>(vocabulary) - 1;
}

Lexicon parse_lexicon(std::string_view text, std::size_t vocabulary) {
    if (vocabulary < 1) throw ConfigError("vocabulary must hold at least one symbol");
    Lexicon lex;
    lex.vocabulary = vocabulary;
    const auto lines = split_lines(text);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const auto line = lines[i];
        if (line.empty() || line.front() == '#') continue;
        const auto fields = split(line, '\t');
        const auto where = "lexicon line " + std::to_string(i + 1) + ": ";
        if (fields.size() != 2 || fields[0].empty()) throw DataError(where + "expected word<TAB>category_id");
        const double id = io::parse_double(fields[1]);
        if (id < 0 || id >= static_cast<double>(vocabulary) || id != std::floor(id)) {
            throw DataError(where + "category id out of range");
        }
        lex.words[lower(fields[0])] = static_cast<int>(id);
    }
    return lex;
}

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    for (const auto chunk : split_ws(text)) {
        if (chunk.front() == '@' || starts_with_ci(chunk, "http://") || starts_with_ci(chunk, "https://") ||
            starts_with_ci(chunk, "www.")) {
            continue;
        }
        std::string current;
        for (const char c : chunk) {
            const auto u = static_cast<unsigned char>(c);
            if (u < 128 && std::isalnum(u)) {
                current.push_back(static_cast<char>(std::tolower(u)));
            } else if (!current.empty()) {
                tokens.push_back(std::move(current));
                current.clear();
            }
        }
        if (!current.empty()) tokens.push_back(std::move(current));
    }
    return tokens;
}

std::vector<int> encode(std::span<const std::string> tokens, const Lexicon& lexicon) {
    std::vector<int> ids;
    ids.reserve(tokens.size());
    for (const auto& t : tokens) ids.push_back(lexicon.lookup(t));
    return ids;
}

ParsedDocuments parse_documents(std::string_view text, const Lexicon& lexicon) {
    ParsedDocuments out;
    const auto lines = split_lines(text);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const auto line = lines[i];
        if (line.empty()) continue;
        const auto tab1 = line.find('\t');
        const auto tab2 = tab1 == std::string_view::npos ? tab1 : line.find('\t', tab1 + 1);
        const auto where = "line " + std::to_string(i + 1) + ": ";
        if (tab2 == std::string_view::npos) throw DataError(where + "expected date<TAB>source<TAB>text");
        DocumentRecord rec;
        try {
            rec.date = parse_date(line.substr(0, tab1));
        } catch (const DataError& e) {
            throw DataError(where + e.what());
        }
        rec.source = std::string(line.substr(tab1 + 1, tab2 - tab1 - 1));
        rec.tokens = encode(tokenize(line.substr(tab2 + 1)), lexicon);
        if (rec.tokens.empty()) {
            out.empty_lines.push_back(i + 1);
            continue;
        }
        out.records.push_back(std::move(rec));
    }
    return out;
}

double path_log_prob(const HmmModel& model, std::span<const int> obs, std::span<const std::size_t> states) {
    if (obs.size() != states.size() || obs.empty()) throw DataError("path and observations differ in length");
    double lp = safe_log(model.pi(static_cast<Eigen::Index>(states[0]))) +
                safe_log(model.B(static_cast<Eigen::Index>(states[0]), obs[0]));
    for (std::size_t t = 1; t < obs.size(); ++t) {
        lp += safe_log(model.A(static_cast<Eigen::Index>(states[t - 1]), static_cast<Eigen::Index>(states[t])));
        lp += safe_log(model.B(static_cast<Eigen::Index>(states[t]), obs[t]));
    }
    return lp;
}

DecodedPath viterbi(const HmmModel& model, std::span<const int> obs) {
    const std::size_t n = model.states();
    const std::size_t T = obs.size();
    if (T == 0) throw DataError("cannot decode an empty observation sequence");
    for (std::size_t t = 0; t < T; ++t) {
        if (obs[t] < 0 || static_cast<std::size_t>(obs[t]) >= model.vocabulary()) {
            throw DataError("symbol " + std::to_string(obs[t]) + " at position " + std::to_string(t) +
                            " is outside the vocabulary");
        }
        if ((model.B.col(obs[t]).array() <= 0.0).all()) {
            throw ModelError("symbol " + std::to_string(obs[t]) + " at position " + std::to_string(t) +
                             " has zero emission probability in every state");
        }
    }

    Eigen::MatrixXd logA = model.A.unaryExpr(&safe_log);
    Eigen::MatrixXd logB = model.B.unaryExpr(&safe_log);

    // best[t][j]: highest log-probability of the remaining observations
    // t+1..T-1 given state j at t.
    std::vector<std::vector<double>> best(T, std::vector<double>(n, 0.0));
    for (std::size_t t = T - 1; t-- > 0;) {
        for (std::size_t j = 0; j < n; ++j) {
            double m = kNegInf;
            for (std::size_t k = 0; k < n; ++k) {
                const auto kk = static_cast<Eigen::Index>(k);
                m = std::max(m, logA(static_cast<Eigen::Index>(j), kk) + logB(kk, obs[t + 1]) + best[t + 1][k]);
            }
            best[t][j] = m;
        }
    }

    // Forward pass picks the smallest index attaining the optimum at every
    // step, which yields the lexicographically smallest optimal path.
    const auto pick = [n](const std::vector<double>& score) {
        const double top = *std::max_element(score.begin(), score.end());
        if (top == kNegInf) throw ModelError("observation sequence has probability zero under the model");
        const double tol = 1e-12 * (1.0 + std::abs(top));
        for (std::size_t k = 0; k < n; ++k) {
            if (score[k] >= top - tol) return k;
        }
        return n - 1;
    };

    DecodedPath path;
    path.states.resize(T);
    std::vector<double> score(n);
    for (std::size_t j = 0; j < n; ++j) {
        const auto jj = static_cast<Eigen::Index>(j);
        score[j] = safe_log(model.pi(jj)) + logB(jj, obs[0]) + best[0][j];
    }
    path.states[0] = pick(score);
    for (std::size_t t = 1; t < T; ++t) {
        const auto prev = static_cast<Eigen::Index>(path.states[t - 1]);
        for (std::size_t k = 0; k < n; ++k) {
            const auto kk = static_cast<Eigen::Index>(k);
            score[k] = logA(prev, kk) + logB(kk, obs[t]) + best[t][k];
        }
        path.states[t] = pick(score);
    }
    path.log_prob = path_log_prob(model, obs, path.states);
    return path;
}

std::vector<LabeledSequence> parse_labeled_corpus(std::string_view text, const Lexicon& lexicon,
                                                  std::span<const std::string> labels) {
    std::vector<LabeledSequence> corpus;
    const auto lines = split_lines(text);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const auto items = split_ws(lines[i]);
        if (items.empty()) continue;
        LabeledSequence seq;
        for (const auto item : items) {
            const auto bar = item.rfind('|');
            const auto where = "corpus line " + std::to_string(i + 1) + ": ";
            if (bar == std::string_view::npos || bar == 0) throw DataError(where + "expected word|label");
            const auto label = item.substr(bar + 1);
            const auto it = std::find(labels.begin(), labels.end(), label);
            if (it == labels.end()) throw DataError(where + "unseen state label '" + std::string(label) + "'");
            seq.tokens.push_back(lexicon.lookup(lower(item.substr(0, bar))));
            seq.states.push_back(static_cast<std::size_t>(it - labels.begin()));
        }
        corpus.push_back(std::move(seq));
    }
    if (corpus.empty()) throw DataError("labeled corpus is empty");
    return corpus;
}

HmmModel supervised_estimate(std::span<const LabeledSequence> corpus, std::vector<std::string> labels,
                             std::size_t vocabulary) {
    const std::size_t n = labels.size();
    if (n < 2) throw ConfigError("an HMM needs at least two state labels");
    if (vocabulary < 1) throw ConfigError("vocabulary must hold at least one symbol");
    const auto ni = static_cast<Eigen::Index>(n);
    const auto vi = static_cast<Eigen::Index>(vocabulary);
    Eigen::MatrixXd A = Eigen::MatrixXd::Ones(ni, ni);
    Eigen::MatrixXd B = Eigen::MatrixXd::Ones(ni, vi);
    Eigen::VectorXd pi = Eigen::VectorXd::Ones(ni);
    std::size_t tokens = 0;
    for (const auto& seq : corpus) {
        if (seq.tokens.size() != seq.states.size()) throw DataError("labeled sequence has mismatched lengths");
        for (std::size_t t = 0; t < seq.states.size(); ++t) {
            if (seq.states[t] >= n) throw DataError("unseen state label index " + std::to_string(seq.states[t]));
            if (seq.tokens[t] < 0 || static_cast<std::size_t>(seq.tokens[t]) >= vocabulary) {
                throw DataError("token id " + std::to_string(seq.tokens[t]) + " outside the vocabulary");
            }
            const auto s = static_cast<Eigen::Index>(seq.states[t]);
            if (t == 0) pi(s) += 1.0;
            else A(static_cast<Eigen::Index>(seq.states[t - 1]), s) += 1.0;
            B(s, seq.tokens[t]) += 1.0;
            ++tokens;
        }
    }
    if (tokens == 0) throw DataError("labeled corpus is empty");
    HmmModel model;
    model.labels = std::move(labels);
    model.A = A.array().colwise() / A.rowwise().sum().array();
    model.B = B.array().colwise() / B.rowwise().sum().array();
    model.pi = pi / pi.sum();
    return model;
}

std::vector<Segment> extract_segments(std::span<const std::size_t> path, std::size_t min_run) {
    if (min_run < 1) throw ConfigError("min_run must be at least 1");
    std::vector<Segment> out;
    std::size_t start = 0;
    for (std::size_t t = 1; t <= path.size(); ++t) {
        if (t == path.size() || path[t] != path[start]) {
            if (t - start >= min_run) out.push_back({start, t - 1, path[start]});
            start = t;
        }
    }
    return out;
}

double score_document(const HmmModel& model, const DocumentRecord& doc) {
    const std::size_t pos = state_index(model, "positive");
    const std::size_t neg = state_index(model, "negative");
    const auto path = viterbi(model, doc.tokens);
    double score = 0.0;
    for (std::size_t s : path.states) {
        if (s == pos) score += 1.0;
        else if (s == neg) score -= 1.0;
    }
    return score / static_cast<double>(path.states.size());
}

SentimentSeries score_documents(const HmmModel& model, std::span<const DocumentRecord> docs,
                                std::vector<std::size_t>* failed) {
    model.validate();
    std::map<Date, std::pair<double, std::size_t>> by_date;
    for (std::size_t i = 0; i < docs.size(); ++i) {
        double s = 0.0;
        if (failed) {
            try {
                s = score_document(model, docs[i]);
            } catch (const Error&) {
                failed->push_back(i);
                continue;
            }
        } else {
            s = score_document(model, docs[i]);
        }
        auto& [sum, count] = by_date[docs[i].date];
        sum += s;
        ++count;
    }
    SentimentSeries out;
    for (const auto& [date, acc] : by_date) {
        out.push_back({date, acc.first / static_cast<double>(acc.second)});
    }
    return out;
}

std::vector<double> align_sentiment(std::span<const Date> trading_dates, const SentimentSeries& sentiment,
                                    int lookback_days) {
    std::vector<double> out(trading_dates.size(), 0.0);
    for (std::size_t i = 0; i < trading_dates.size(); ++i) {
        const Date d = trading_dates[i];
        const auto it = std::upper_bound(sentiment.begin(), sentiment.end(), d,
                                         [](const Date& x, const DailyScore& s) { return x < s.date; });
        if (it == sentiment.begin()) continue;
        const auto& prev = *std::prev(it);
        const auto gap = (std::chrono::sys_days(d) - std::chrono::sys_days(prev.date)).count();
        if (gap <= lookback_days) out[i] = prev.score;
    }
    return out;
}

std::string serialize_scores(const SentimentSeries& series) {
    std::string out = "date,score\n";
    for (const auto& s : series) out += format_date(s.date) + "," + io::format_double(s.score) + "\n";
    return out;
}

SentimentSeries parse_scores(std::string_view text) {
    SentimentSeries out;
    const auto lines = split_lines(text);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (lines[i].empty() || (i == 0 && lines[i] == "date,score")) continue;
        const auto f = split(lines[i], ',');
        const auto where = "line " + std::to_string(i + 1) + ": ";
        if (f.size() != 2) throw DataError(where + "expected date,score");
        DailyScore s;
        try {
            s.date = parse_date(f[0]);
            s.score = io::parse_double(f[1]);
        } catch (const DataError& e) {
            throw DataError(where + e.what());
        }
        if (!(s.score >= -1.0 && s.score <= 1.0)) throw DataError(where + "score outside [-1, 1]");
        if (!out.empty() && !(out.back().date < s.date)) throw DataError(where + "dates must be strictly increasing");
        out.push_back(s);
    }
    return out;
}

std::string to_text(const HmmModel& model) {
    model.validate();
    std::ostringstream os;
    const auto row = [&os](std::string_view key, const auto& v) {
        os << key;
        for (Eigen::Index i = 0; i < v.size(); ++i) os << '\t' << io::format_double(v(i));
        os << '\n';
    };
    os << "stockcast-hmm v1\n";
    os << "labels";
    for (const auto& l : model.labels) os << '\t' << l;
    os << "\nvocabulary\t" << model.vocabulary() << '\n';
    row("pi", model.pi);
    for (Eigen::Index r = 0; r < model.A.rows(); ++r) row("A", model.A.row(r));
    for (Eigen::Index r = 0; r < model.B.rows(); ++r) row("B", model.B.row(r));
    return os.str();
}

HmmModel from_text(std::string_view text) {
    std::vector<std::vector<std::string_view>> lines;
    for (const auto line : split_lines(text)) {
        if (!line.empty()) lines.push_back(split(line, '\t'));
    }
    if (lines.empty() || lines[0].size() != 1 || lines[0][0] != "stockcast-hmm v1") {
        throw DataError("not a stockcast HMM model (v1)");
    }
    std::size_t at = 1;
    const auto next = [&](std::string_view key) -> const std::vector<std::string_view>& {
        if (at >= lines.size() || lines[at][0] != key) throw DataError("hmm text: expected '" + std::string(key) + "'");
        return lines[at++];
    };
    HmmModel m;
    for (const auto l : std::span(next("labels")).subspan(1)) m.labels.emplace_back(l);
    const auto& vl = next("vocabulary");
    if (vl.size() != 2) throw DataError("malformed vocabulary line");
    const double v = io::parse_double(vl[1]);
    if (v < 1 || v != std::floor(v) || v > 1e6) throw DataError("invalid vocabulary size");
    const auto n = static_cast<Eigen::Index>(m.labels.size());
    const auto vocab = static_cast<Eigen::Index>(v);
    const auto read_row = [&](std::string_view key, Eigen::Index width) {
        const auto& f = next(key);
        if (static_cast<Eigen::Index>(f.size()) != width + 1) throw DataError("malformed '" + std::string(key) + "' row");
        Eigen::VectorXd r(width);
        for (Eigen::Index i = 0; i < width; ++i) r(i) = io::parse_double(f[static_cast<std::size_t>(i + 1)]);
        return r;
    };
    m.pi = read_row("pi", n);
    m.A.resize(n, n);
    for (Eigen::Index r = 0; r < n; ++r) m.A.row(r) = read_row("A", n).transpose();
    m.B.resize(n, vocab);
    for (Eigen::Index r = 0; r < n; ++r) m.B.row(r) = read_row("B", vocab).transpose();
    if (at != lines.size()) throw DataError("trailing lines in HMM text");
    m.validate();
    return m;
}

}  // namespace stockcast::hmm
