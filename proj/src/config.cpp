#include "stockcast/config.hpp"

#include "stockcast/errors.hpp"
#include "stockcast/io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

namespace stockcast::config {

namespace {

enum class Kind { Size, Double, Bool, Text, List, Models, Features, Order, Seasonal, Seasonalities, Trend };

struct KeySpec {
    const char* key;
    const char* value;
    Kind kind;
};

constexpr KeySpec kKeys[] = {
    {"additive.capacity", "0", Kind::Double},
    {"additive.changepoint_range", "0.8", Kind::Double},
    {"additive.changepoints", "25", Kind::Size},
    {"additive.holidays", "", Kind::Text},
    {"additive.interval_level", "0.8", Kind::Double},
    {"additive.lambda_delta", "0", Kind::Double},
    {"additive.max_iter", "20000", Kind::Size},
    {"additive.n_sims", "1000", Kind::Size},
    {"additive.seasonalities", "5:2,252:10", Kind::Seasonalities},
    {"additive.trend", "linear", Kind::Trend},
    {"boost.l2", "0", Kind::Double},
    {"boost.lags", "1,2,3,5", Kind::List},
    {"boost.learning_rate", "0.1", Kind::Double},
    {"boost.max_bins", "64", Kind::Size},
    {"boost.max_depth", "0", Kind::Size},
    {"boost.max_leaves", "31", Kind::Size},
    {"boost.min_samples_leaf", "5", Kind::Size},
    {"boost.n_trees", "100", Kind::Size},
    {"data.dir", "data", Kind::Text},
    {"data.end", "", Kind::Text},
    {"data.start", "", Kind::Text},
    {"data.symbols", "", Kind::List},
    {"data.url", "", Kind::Text},
    {"folds.count", "5", Kind::Size},
    {"folds.test_len", "0", Kind::Size},
    {"lstm.batch_size", "32", Kind::Size},
    {"lstm.clip_norm", "1", Kind::Double},
    {"lstm.epochs", "100", Kind::Size},
    {"lstm.features", "open,high,low,volume", Kind::Features},
    {"lstm.hidden", "64", Kind::Size},
    {"lstm.learning_rate", "0.001", Kind::Double},
    {"lstm.use_sentiment", "false", Kind::Bool},
    {"models", "lstm_univariate,lstm_multivariate,sarima,additive_boosted", Kind::Models},
    {"out", "out", Kind::Text},
    {"sarima.max_iter", "5000", Kind::Size},
    {"sarima.order", "1,1,1", Kind::Order},
    {"sarima.restarts", "3", Kind::Size},
    {"sarima.seasonal", "3,3,1,15", Kind::Seasonal},
    {"seed", "42", Kind::Size},
    {"sentiment.corpus", "", Kind::Text},
    {"sentiment.documents", "", Kind::Text},
    {"sentiment.file", "", Kind::Text},
    {"sentiment.labels", "positive,negative,neutral", Kind::List},
    {"sentiment.lexicon", "", Kind::Text},
    {"sentiment.lookback_days", "3", Kind::Size},
    {"sentiment.min_run", "1", Kind::Size},
    {"sentiment.model", "", Kind::Text},
    {"tune.budget", "100000", Kind::Size},
    {"tune.model", "additive_boosted", Kind::Text},
    {"tune.threads", "1", Kind::Size},
    {"window.horizon", "30", Kind::Size},
    {"window.lookback", "30", Kind::Size},
};

const KeySpec* find_key(std::string_view key) {
    for (const auto& k : kKeys) {
        if (key == k.key) return &k;
    }
    return nullptr;
}

std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

double to_double(const std::string& key, const std::string& value) {
    try {
        const double v = io::parse_double(value);
        if (!std::isfinite(v)) throw DataError("not finite");
        return v;
    } catch (const DataError&) {
        throw ConfigError(key + ": '" + value + "' is not a number");
    }
}

std::size_t to_size(const std::string& key, const std::string& value) {
    const double v = to_double(key, value);
    if (v < 0 || v != std::floor(v) || v > 9.0e15) throw ConfigError(key + ": '" + value + "' is not a non-negative integer");
    return static_cast<std::size_t>(v);
}

std::vector<std::size_t> size_list(const std::string& key, const std::string& value) {
    std::vector<std::size_t> out;
    for (const auto& item : split_list(value)) out.push_back(to_size(key, item));
    return out;
}

sarima::Order order_from(const std::string& order, const std::string& seasonal) {
    const auto a = size_list("sarima.order", order);
    const auto s = size_list("sarima.seasonal", seasonal);
    return sarima::Order{a[0], a[1], a[2], s[0], s[1], s[2], s[3]};
}

void check(const KeySpec& spec, const std::string& value) {
    const std::string key = spec.key;
    switch (spec.kind) {
        case Kind::Size:
            to_size(key, value);
            break;
        case Kind::Double:
            to_double(key, value);
            break;
        case Kind::Bool:
            if (value != "true" && value != "false") throw ConfigError(key + ": expected true or false");
            break;
        case Kind::Text:
        case Kind::List:
            break;
        case Kind::Models:
            if (split_list(value).empty()) throw ConfigError(key + ": at least one model is required");
            for (const auto& m : split_list(value)) eval::parse_family(m);
            break;
        case Kind::Features:
            if (split_list(value).empty()) throw ConfigError(key + ": at least one feature is required");
            for (const auto& f : split_list(value)) {
                try {
                    parse_feature(f);
                } catch (const DataError& e) {
                    throw ConfigError(key + ": " + e.what());
                }
            }
            break;
        case Kind::Order:
            if (size_list(key, value).size() != 3) throw ConfigError(key + ": expected a,b,c");
            break;
        case Kind::Seasonal: {
            const auto s = size_list(key, value);
            if (s.size() != 4) throw ConfigError(key + ": expected A,B,C,m");
            if (s[3] == 0) throw ConfigError(key + ": season length m must be at least 1");
            break;
        }
        case Kind::Seasonalities:
            for (const auto& item : split_list(value)) {
                const auto colon = item.find(':');
                if (colon == std::string::npos) throw ConfigError(key + ": expected period:order entries");
                if (!(to_double(key, item.substr(0, colon)) > 0.0) || to_size(key, item.substr(colon + 1)) == 0) {
                    throw ConfigError(key + ": period and order must be positive");
                }
            }
            break;
        case Kind::Trend:
            if (value != "linear" && value != "logistic") throw ConfigError(key + ": expected linear or logistic");
            break;
    }
}

}  // namespace

std::vector<std::string> split_list(std::string_view text) {
    std::vector<std::string> out;
    if (trim(text).empty()) return out;
    std::size_t s = 0;
    while (true) {
        const auto p = text.find(',', s);
        out.push_back(trim(text.substr(s, p == std::string_view::npos ? p : p - s)));
        if (p == std::string_view::npos) break;
        s = p + 1;
    }
    return out;
}

const std::map<std::string, std::string>& RunConfig::defaults() {
    static const std::map<std::string, std::string> table = [] {
        std::map<std::string, std::string> m;
        for (const auto& k : kKeys) m.emplace(k.key, k.value);
        return m;
    }();
    return table;
}

RunConfig::RunConfig() : values_(defaults()) {}

RunConfig RunConfig::parse(std::string_view text) {
    RunConfig cfg;
    std::size_t pos = 0;
    std::size_t line_no = 0;
    while (pos < text.size()) {
        auto end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        const std::string line = trim(text.substr(pos, end - pos));
        pos = end + 1;
        ++line_no;
        if (line.empty() || line.front() == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(line_no) + ": expected key=value");
        try {
            cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
        } catch (const ConfigError& e) {
            throw ConfigError("config line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return cfg;
}

void RunConfig::set(const std::string& key, const std::string& value) {
    static const std::string prefix = "tune.space.";
    if (key.rfind(prefix, 0) == 0) {
        const std::string target = key.substr(prefix.size());
        const KeySpec* spec = find_key(target);
        if (spec == nullptr || (spec->kind != Kind::Size && spec->kind != Kind::Double)) {
            throw ConfigError(key + ": '" + target + "' is not a tunable numeric key");
        }
        const auto items = split_list(value);
        if (items.empty()) throw ConfigError(key + ": no candidates");
        std::size_t stars = 0;
        for (const auto& item : items) {
            const bool star = !item.empty() && item.front() == '*';
            stars += star ? 1 : 0;
            check(*spec, star ? item.substr(1) : item);
        }
        if (stars > 1) throw ConfigError(key + ": more than one default marked with '*'");
        const auto it = std::find_if(tune_space_.begin(), tune_space_.end(),
                                     [&](const auto& e) { return e.first == target; });
        if (it != tune_space_.end()) throw ConfigError(key + ": declared twice");
        tune_space_.emplace_back(target, value);
        return;
    }
    const KeySpec* spec = find_key(key);
    if (spec == nullptr) throw ConfigError("unknown config key '" + key + "'");
    check(*spec, value);
    values_[key] = value;
}

const std::string& RunConfig::get(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
    return it->second;
}

std::size_t RunConfig::get_size(const std::string& key) const { return to_size(key, get(key)); }
double RunConfig::get_double(const std::string& key) const { return to_double(key, get(key)); }
bool RunConfig::get_bool(const std::string& key) const { return get(key) == "true"; }
std::vector<std::string> RunConfig::get_list(const std::string& key) const { return split_list(get(key)); }
std::uint64_t RunConfig::seed() const { return get_size("seed"); }

std::string RunConfig::resolved() const {
    std::string out;
    for (const auto& [k, v] : values_) out += k + "=" + v + "\n";
    for (const auto& [k, v] : tune_space_) out += "tune.space." + k + "=" + v + "\n";
    return out;
}

std::vector<eval::ModelFamily> RunConfig::models() const {
    std::vector<eval::ModelFamily> out;
    for (const auto& m : get_list("models")) {
        const auto f = eval::parse_family(m);
        if (std::find(out.begin(), out.end(), f) == out.end()) out.push_back(f);
    }
    return out;
}

eval::ModelSpec RunConfig::model_spec(eval::ModelFamily family) const {
    eval::ModelSpec spec;
    spec.family = family;
    spec.lookback = get_size("window.lookback");

    spec.lstm.hidden = get_size("lstm.hidden");
    spec.lstm.epochs = get_size("lstm.epochs");
    spec.lstm.learning_rate = get_double("lstm.learning_rate");
    spec.lstm.batch_size = get_size("lstm.batch_size");
    spec.lstm.clip_norm = get_double("lstm.clip_norm");
    spec.lstm.seed = seed();
    spec.lstm_inputs.clear();
    for (const auto& f : get_list("lstm.features")) spec.lstm_inputs.push_back(parse_feature(f));
    spec.lstm_use_sentiment = get_bool("lstm.use_sentiment");

    auto& a = spec.additive;
    a.trend = get("additive.trend") == "logistic" ? additive::TrendKind::Logistic : additive::TrendKind::Linear;
    a.capacity = get_double("additive.capacity");
    a.n_changepoints = get_size("additive.changepoints");
    a.changepoint_range = get_double("additive.changepoint_range");
    a.lambda_delta = get_double("additive.lambda_delta");
    a.max_iter = get_size("additive.max_iter");
    a.seasonalities.clear();
    for (const auto& item : get_list("additive.seasonalities")) {
        const auto colon = item.find(':');
        a.seasonalities.push_back({to_double("additive.seasonalities", item.substr(0, colon)),
                                   to_size("additive.seasonalities", item.substr(colon + 1))});
    }
    const auto holidays_path = get("additive.holidays");
    if (!holidays_path.empty()) {
        const auto text = io::read_file(holidays_path);
        std::size_t pos = 0, line_no = 0;
        while (pos < text.size()) {
            auto end = text.find('\n', pos);
            if (end == std::string::npos) end = text.size();
            const std::string line = trim(std::string_view(text).substr(pos, end - pos));
            pos = end + 1;
            ++line_no;
            if (line.empty() || line.front() == '#') continue;
            const auto tab = line.find('\t');
            if (tab == std::string::npos) {
                throw DataError(holidays_path + " line " + std::to_string(line_no) + ": expected name<TAB>date");
            }
            const std::string name = line.substr(0, tab);
            const Date d = parse_date(trim(line.substr(tab + 1)));
            auto it = std::find_if(a.holidays.begin(), a.holidays.end(),
                                   [&](const additive::HolidayEvent& e) { return e.name == name; });
            if (it == a.holidays.end()) {
                a.holidays.push_back({name, 0.0, {}});
                it = a.holidays.end() - 1;
            }
            it->dates.push_back(d);
        }
        for (auto& h : a.holidays) {
            std::sort(h.dates.begin(), h.dates.end());
            h.dates.erase(std::unique(h.dates.begin(), h.dates.end()), h.dates.end());
        }
    }
    spec.interval.level = get_double("additive.interval_level");
    spec.interval.n_sims = get_size("additive.n_sims");
    spec.interval.seed = seed();

    spec.boost.n_trees = get_size("boost.n_trees");
    spec.boost.max_leaves = get_size("boost.max_leaves");
    spec.boost.min_samples_leaf = get_size("boost.min_samples_leaf");
    spec.boost.max_depth = get_size("boost.max_depth");
    spec.boost.l2_leaf_penalty = get_double("boost.l2");
    spec.boost.learning_rate = get_double("boost.learning_rate");
    spec.boost.max_bins = get_size("boost.max_bins");
    spec.lags = size_list("boost.lags", get("boost.lags"));

    spec.order = order_from(get("sarima.order"), get("sarima.seasonal"));
    spec.sarima.max_iter = get_size("sarima.max_iter");
    spec.sarima.restarts = get_size("sarima.restarts");
    spec.sarima.seed = seed();
    return spec;
}

}  // namespace stockcast::config
