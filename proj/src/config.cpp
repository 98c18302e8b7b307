#include "qsa/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#include "qsa/analysis.hpp"
#include "qsa/csv.hpp"
#include "qsa/gfo.hpp"
#include "qsa/probing.hpp"
#include "qsa/qmc.hpp"

namespace qsa::config {

namespace {

// Internal failure inside a value; rethrown with the line and key attached.
struct BadValue {
    std::string what;
};

std::string trim(std::string_view s) {
    std::size_t a = 0;
    std::size_t b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) {
        ++a;
    }
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) {
        --b;
    }
    return std::string(s.substr(a, b - a));
}

bool is_bare_word(const std::string& s) {
    if (s.empty()) {
        return false;
    }
    const auto first = static_cast<unsigned char>(s[0]);
    if (!(std::isalnum(first) || s[0] == '_' || s[0] == '.' || s[0] == '/')) {
        return false;
    }
    return std::all_of(s.begin(), s.end(), [](char c) {
        const auto u = static_cast<unsigned char>(c);
        return std::isalnum(u) || c == '_' || c == '.' || c == '/' || c == '-' || c == ':';
    });
}

// Recursive descent over + - * / ^ with unary sign, parentheses, constants and
// a handful of functions. Throws BadValue on anything else.
class Expression {
public:
    explicit Expression(std::string_view text) : s_(text) {}

    double evaluate() {
        const double v = sum();
        skip();
        if (pos_ != s_.size()) {
            throw BadValue{"unexpected '" + std::string(1, s_[pos_]) + "' in expression"};
        }
        if (!std::isfinite(v)) {
            throw BadValue{"expression is not finite"};
        }
        return v;
    }

private:
    std::string_view s_;
    std::size_t pos_ = 0;

    void skip() {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) {
            ++pos_;
        }
    }

    bool eat(char c) {
        skip();
        if (pos_ < s_.size() && s_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    double sum() {
        double v = product();
        for (;;) {
            if (eat('+')) {
                v += product();
            } else if (eat('-')) {
                v -= product();
            } else {
                return v;
            }
        }
    }

    double product() {
        double v = power();
        for (;;) {
            if (eat('*')) {
                v *= power();
            } else if (eat('/')) {
                v /= power();
            } else {
                return v;
            }
        }
    }

    double power() {
        const double base = unary();
        if (eat('^')) {
            return std::pow(base, power());
        }
        return base;
    }

    double unary() {
        if (eat('-')) {
            return -unary();
        }
        if (eat('+')) {
            return unary();
        }
        return primary();
    }

    double primary() {
        skip();
        if (pos_ >= s_.size()) {
            throw BadValue{"expression ends early"};
        }
        if (eat('(')) {
            const double v = sum();
            if (!eat(')')) {
                throw BadValue{"missing ')'"};
            }
            return v;
        }
        const char c = s_[pos_];
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
            double v = 0.0;
            const auto* begin = s_.data() + pos_;
            const auto [ptr, ec] = std::from_chars(begin, s_.data() + s_.size(), v);
            if (ec != std::errc()) {
                throw BadValue{"malformed number"};
            }
            pos_ += static_cast<std::size_t>(ptr - begin);
            return v;
        }
        if (std::isalpha(static_cast<unsigned char>(c))) {
            const std::size_t start = pos_;
            while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_')) {
                ++pos_;
            }
            const std::string_view id = s_.substr(start, pos_ - start);
            if (id == "pi") {
                return std::numbers::pi;
            }
            if (id == "e") {
                return std::numbers::e;
            }
            if (!eat('(')) {
                throw BadValue{"unknown name '" + std::string(id) + "'"};
            }
            const double arg = sum();
            if (!eat(')')) {
                throw BadValue{"missing ')'"};
            }
            if (id == "sqrt") {
                return std::sqrt(arg);
            }
            if (id == "log") {
                return std::log(arg);
            }
            if (id == "exp") {
                return std::exp(arg);
            }
            if (id == "sin") {
                return std::sin(arg);
            }
            if (id == "cos") {
                return std::cos(arg);
            }
            throw BadValue{"unknown function '" + std::string(id) + "'"};
        }
        throw BadValue{"unexpected '" + std::string(1, c) + "'"};
    }
};

class ValueParser {
public:
    explicit ValueParser(std::string_view text) : s_(text) {}

    Value parse_all() {
        Value v = item();
        skip();
        if (pos_ != s_.size()) {
            throw BadValue{"trailing text after value"};
        }
        return v;
    }

private:
    std::string_view s_;
    std::size_t pos_ = 0;

    void skip() {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) {
            ++pos_;
        }
    }

    // Position of the bracket matching the one at `open`, ignoring quotes.
    std::size_t matching(std::size_t open) const {
        int depth = 0;
        bool quoted = false;
        for (std::size_t i = open; i < s_.size(); ++i) {
            const char c = s_[i];
            if (c == '"') {
                quoted = !quoted;
            } else if (!quoted && (c == '(' || c == '[')) {
                ++depth;
            } else if (!quoted && (c == ')' || c == ']')) {
                if (--depth == 0) {
                    return i;
                }
            }
        }
        throw BadValue{"unbalanced brackets"};
    }

    bool top_level_comma(std::size_t from, std::size_t to) const {
        int depth = 0;
        for (std::size_t i = from; i < to; ++i) {
            const char c = s_[i];
            if (c == '(' || c == '[') {
                ++depth;
            } else if (c == ')' || c == ']') {
                --depth;
            } else if (c == ',' && depth == 0) {
                return true;
            }
        }
        return false;
    }

    Value sequence(char close) {
        std::vector<Value> items;
        skip();
        if (pos_ < s_.size() && s_[pos_] == close) {
            ++pos_;
            return Value::list(std::move(items));
        }
        for (;;) {
            items.push_back(item());
            skip();
            if (pos_ >= s_.size()) {
                throw BadValue{"unterminated list"};
            }
            if (s_[pos_] == ',') {
                ++pos_;
                continue;
            }
            if (s_[pos_] == close) {
                ++pos_;
                return Value::list(std::move(items));
            }
            throw BadValue{"expected ',' or '" + std::string(1, close) + "' in list"};
        }
    }

    Value item() {
        skip();
        if (pos_ >= s_.size()) {
            throw BadValue{"missing value"};
        }
        const char c = s_[pos_];
        if (c == '[') {
            ++pos_;
            return sequence(']');
        }
        if (c == '(') {
            const std::size_t close = matching(pos_);
            if (top_level_comma(pos_ + 1, close)) {
                ++pos_;
                return sequence(')');
            }
        }
        if (c == '"') {
            const auto end = s_.find('"', pos_ + 1);
            if (end == std::string_view::npos) {
                throw BadValue{"unterminated string"};
            }
            Value v = Value::of(std::string(s_.substr(pos_ + 1, end - pos_ - 1)));
            pos_ = end + 1;
            return v;
        }
        // scalar token up to the next top-level ',' or closing bracket
        const std::size_t start = pos_;
        int depth = 0;
        while (pos_ < s_.size()) {
            const char x = s_[pos_];
            if (x == '(') {
                ++depth;
            } else if (x == ')') {
                if (depth == 0) {
                    break;
                }
                --depth;
            } else if ((x == ',' || x == ']') && depth == 0) {
                break;
            }
            ++pos_;
        }
        const std::string token = trim(s_.substr(start, pos_ - start));
        if (token == "true") {
            return Value::of(true);
        }
        if (token == "false") {
            return Value::of(false);
        }
        try {
            return Value::of(Expression(token).evaluate());
        } catch (const BadValue& err) {
            if (is_bare_word(token)) {
                return Value::of(token);
            }
            throw;
        }
    }
};

bool brackets_open(const std::string& s) {
    int depth = 0;
    bool quoted = false;
    for (char c : s) {
        if (c == '"') {
            quoted = !quoted;
        } else if (!quoted && (c == '[' || c == '(')) {
            ++depth;
        } else if (!quoted && (c == ']' || c == ')')) {
            --depth;
        }
    }
    return depth > 0;
}

std::string strip_comment(const std::string& line) {
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        if (line[i] == '"') {
            quoted = !quoted;
        } else if (line[i] == '#' && !quoted) {
            return line.substr(0, i);
        }
    }
    return line;
}

bool valid_key(const std::string& k) {
    if (k.empty() || !(std::isalpha(static_cast<unsigned char>(k[0])) || k[0] == '_')) {
        return false;
    }
    return std::all_of(k.begin(), k.end(),
                       [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; });
}

// Typed access to one section; every key must be consumed exactly once.
class Reader {
public:
    Reader(const Section* section, std::string name) : section_(section), name_(std::move(name)) {}

    [[nodiscard]] bool present() const { return section_ != nullptr; }

    const Entry* find(const std::string& key) {
        if (section_ == nullptr) {
            return nullptr;
        }
        for (const auto& e : section_->entries) {
            if (e.key == key) {
                used_.insert(key);
                return &e;
            }
        }
        return nullptr;
    }

    bool has(const std::string& key) {
        if (section_ == nullptr) {
            return false;
        }
        return std::any_of(section_->entries.begin(), section_->entries.end(),
                           [&](const Entry& e) { return e.key == key; });
    }

    const Entry& require(const std::string& key) {
        const Entry* e = find(key);
        if (e == nullptr) {
            throw ParseError(section_ ? section_->line : 0, name_ + "." + key, "required key is missing");
        }
        return *e;
    }

    void finish() const {
        if (section_ == nullptr) {
            return;
        }
        for (const auto& e : section_->entries) {
            if (!used_.count(e.key)) {
                throw ParseError(e.line, name_ + "." + e.key, "unknown key");
            }
        }
    }

    [[nodiscard]] std::string qualified(const Entry& e) const { return name_ + "." + e.key; }

    double number(const Entry& e) const {
        if (e.value.kind != Value::Kind::Number) {
            throw ParseError(e.line, qualified(e), "expected a number");
        }
        return e.value.number;
    }

    std::int64_t integer(const Entry& e) const {
        const double x = number(e);
        if (x != std::floor(x) || std::abs(x) > 9.0e15) {
            throw ParseError(e.line, qualified(e), "expected an integer");
        }
        return static_cast<std::int64_t>(x);
    }

    std::size_t count(const Entry& e) const {
        const auto n = integer(e);
        if (n < 0) {
            throw ParseError(e.line, qualified(e), "expected a non-negative integer");
        }
        return static_cast<std::size_t>(n);
    }

    bool boolean(const Entry& e) const {
        if (e.value.kind != Value::Kind::Bool) {
            throw ParseError(e.line, qualified(e), "expected true or false");
        }
        return e.value.boolean;
    }

    std::string text(const Entry& e) const {
        if (e.value.kind != Value::Kind::String) {
            throw ParseError(e.line, qualified(e), "expected a word or quoted string");
        }
        return e.value.text;
    }

    std::vector<double> numbers(const Entry& e, const Value& v) const {
        if (v.kind != Value::Kind::List) {
            throw ParseError(e.line, qualified(e), "expected a list of numbers");
        }
        std::vector<double> out;
        for (const auto& x : v.items) {
            if (x.kind != Value::Kind::Number) {
                throw ParseError(e.line, qualified(e), "expected a list of numbers");
            }
            out.push_back(x.number);
        }
        return out;
    }

    std::vector<double> numbers(const Entry& e) const { return numbers(e, e.value); }

    // A scalar is accepted as a one-element list.
    std::vector<double> numbers_or_scalar(const Entry& e) const {
        if (e.value.kind == Value::Kind::Number) {
            return {e.value.number};
        }
        return numbers(e);
    }

    std::vector<std::string> words(const Entry& e) const {
        if (e.value.kind != Value::Kind::List) {
            throw ParseError(e.line, qualified(e), "expected a list of words");
        }
        std::vector<std::string> out;
        for (const auto& x : e.value.items) {
            if (x.kind != Value::Kind::String) {
                throw ParseError(e.line, qualified(e), "expected a list of words");
            }
            out.push_back(x.text);
        }
        return out;
    }

    std::vector<std::vector<double>> matrix(const Entry& e) const {
        if (e.value.kind != Value::Kind::List) {
            throw ParseError(e.line, qualified(e), "expected a list of rows");
        }
        std::vector<std::vector<double>> out;
        for (const auto& row : e.value.items) {
            out.push_back(numbers(e, row));
        }
        return out;
    }

    std::pair<double, double> range(const Entry& e) const {
        const auto xs = numbers(e);
        if (xs.size() != 2) {
            throw ParseError(e.line, qualified(e), "expected [lo, hi]");
        }
        return {xs[0], xs[1]};
    }

    std::vector<std::pair<std::int64_t, std::int64_t>> int_pairs(const Entry& e) const {
        const auto rows = matrix(e);
        std::vector<std::pair<std::int64_t, std::int64_t>> out;
        for (const auto& r : rows) {
            if (r.size() != 2 || r[0] != std::floor(r[0]) || r[1] != std::floor(r[1])) {
                throw ParseError(e.line, qualified(e), "expected integer pairs like [(6, 1), (2, 1)]");
            }
            out.emplace_back(static_cast<std::int64_t>(r[0]), static_cast<std::int64_t>(r[1]));
        }
        return out;
    }

private:
    const Section* section_;
    std::string name_;
    std::set<std::string> used_;
};

ProbeConfig default_probe(ExperimentKind kind) {
    ProbeConfig p;
    if (kind == ExperimentKind::Qmc) {
        p.waveform = "triangle";
        p.log_rational_pairs = {{6, 1}, {2, 1}};
        p.phi_draw = std::make_pair(0.0, 1.0);
    } else if (kind == ExperimentKind::Gfo) {
        p.convention = "sine_radians";
        p.amplitude = 2.0;
        p.omega_draw = std::make_pair(0.05, 0.5);
        p.phi_draw = std::make_pair(-std::numbers::pi / 2.0, std::numbers::pi / 2.0);
    }
    return p;
}

void fail(const std::string& key, const std::string& what) { throw ValidationError(key + ": " + what); }

bool positive_finite(double x) { return std::isfinite(x) && x > 0.0; }

void check_range(const std::string& key, const std::pair<double, double>& r) {
    if (!std::isfinite(r.first) || !std::isfinite(r.second) || !(r.first < r.second)) {
        fail(key, "range must satisfy lo < hi");
    }
}

Matrix to_matrix(const std::vector<std::vector<double>>& rows) {
    const auto n = static_cast<Eigen::Index>(rows.size());
    const auto m = n == 0 ? Eigen::Index{0} : static_cast<Eigen::Index>(rows[0].size());
    Matrix out(n, m);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (static_cast<Eigen::Index>(rows[static_cast<std::size_t>(i)].size()) != m) {
            throw ValidationError("matrix rows must have equal length");
        }
        for (Eigen::Index j = 0; j < m; ++j) {
            out(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
        }
    }
    return out;
}

void validate_probe(const ExperimentConfig& c) {
    const ProbeConfig& p = c.probe;
    if (p.waveform != "cosine" && p.waveform != "triangle") {
        fail("probe.waveform", "must be cosine or triangle");
    }
    if (p.convention != "cycles" && p.convention != "sine_radians") {
        fail("probe.convention", "must be cycles or sine_radians");
    }
    if (p.convention == "sine_radians" && p.waveform != "cosine") {
        fail("probe.convention", "sine_radians applies to sinusoidal probes only");
    }
    if (!positive_finite(p.amplitude)) {
        fail("probe.amplitude", "must be > 0");
    }
    if (!positive_finite(p.omega_scale)) {
        fail("probe.omega_scale", "must be > 0");
    }
    const int sources = static_cast<int>(!p.omega.empty()) + static_cast<int>(!p.log_rational_pairs.empty()) +
                        static_cast<int>(p.omega_draw.has_value());
    if (sources != 1) {
        fail("probe.omega", "give exactly one of omega, log_rational_pairs or omega_draw");
    }
    if (!p.log_rational_pairs.empty()) {
        try {
            (void)make_log_rational_frequencies(p.log_rational_pairs);
        } catch (const Error& err) {
            fail("probe.log_rational_pairs", err.what());
        }
    }
    for (double w : p.omega) {
        if (!positive_finite(w)) {
            fail("probe.omega", "frequencies must be > 0");
        }
    }
    if (p.omega_draw) {
        check_range("probe.omega_draw", *p.omega_draw);
        if (!(p.omega_draw->first > 0.0)) {
            fail("probe.omega_draw", "frequencies must be > 0");
        }
    }
    if (!p.phi.empty() && p.phi_draw) {
        fail("probe.phi_draw", "give phases or a phase draw, not both");
    }
    if (p.phi_draw) {
        check_range("probe.phi_draw", *p.phi_draw);
    }
    std::size_t K = p.omega.size() + p.log_rational_pairs.size();
    std::size_t d = 0;
    const std::size_t model_dim = c.kind == ExperimentKind::Gfo ? c.gfo.dim : 2;
    if (p.omega_draw) {
        K = p.v.empty() ? model_dim : p.v.size();
    }
    if (!p.v.empty()) {
        if (p.v.size() != K) {
            fail("probe.v", "needs one amplitude row per frequency");
        }
        d = p.v[0].size();
        for (const auto& row : p.v) {
            if (row.size() != d || d == 0) {
                fail("probe.v", "rows must share one non-zero length");
            }
        }
    } else {
        d = K;
    }
    if (!p.phi.empty() && p.phi.size() != K) {
        fail("probe.phi", "needs one phase per frequency");
    }
    if (d != model_dim) {
        fail("probe", "probe dimension " + std::to_string(d) + " does not match the model (" +
                          std::to_string(model_dim) + ")");
    }
}

void validate_model(const ExperimentConfig& c) {
    if (c.kind == ExperimentKind::LinearExample) {
        const auto& m = c.linear;
        if (m.A_star.size() != 2 || m.A_star[0].size() != 2 || m.A_star[1].size() != 2) {
            fail("model.A_star", "must be 2 x 2");
        }
        if (m.omega.size() != 4) {
            fail("model.omega", "needs four frequencies");
        }
        if (m.theta0.size() != 2) {
            fail("model.theta0", "must have two components");
        }
        if (!std::isfinite(m.forcing)) {
            fail("model.forcing", "must be finite");
        }
        LinearExampleModel model;
        model.A_star = to_matrix(m.A_star);
        model.w11 = m.omega[0];
        model.w21 = m.omega[1];
        model.w12 = m.omega[2];
        model.w22 = m.omega[3];
        model.forcing = m.forcing;
        try {
            model.validate();
        } catch (const Error& err) {
            fail("model", err.what());
        }
    } else if (c.kind == ExperimentKind::Qmc) {
        const auto& m = c.qmc;
        if (m.target != "exp_sine" && m.target != "constant") {
            fail("model.target", "must be exp_sine or constant");
        }
        if (!std::isfinite(m.gamma) || !std::isfinite(m.value)) {
            fail("model.gamma", "must be finite");
        }
        if (m.theta0 && !std::isfinite(*m.theta0)) {
            fail("model.theta0", "must be finite");
        }
        check_range("model.theta0_draw", m.theta0_draw);
    } else {
        const auto& m = c.gfo;
        try {
            (void)builtin_objective(m.objective, m.dim);
        } catch (const Error& err) {
            fail("model.objective", err.what());
        }
        if (!positive_finite(m.epsilon)) {
            fail("model.epsilon", "must be > 0");
        }
        if (m.method != "1qsgd" && m.method != "2qsgd") {
            fail("model.method", "must be 1qsgd or 2qsgd");
        }
        if (!m.gain_matrix.empty()) {
            if (m.gain_matrix.size() != m.dim) {
                fail("model.gain_matrix", "must be dim x dim");
            }
            for (const auto& row : m.gain_matrix) {
                if (row.size() != m.dim) {
                    fail("model.gain_matrix", "must be dim x dim");
                }
            }
            const Matrix M = to_matrix(m.gain_matrix);
            Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (M + M.transpose()));
            if (eig.eigenvalues().minCoeff() <= 0.0) {
                fail("model.gain_matrix", "symmetric part must be positive definite");
            }
        }
        if (m.box) {
            check_range("model.box", *m.box);
        }
        if (!m.theta0.empty()) {
            if (m.theta0.size() != m.dim) {
                fail("model.theta0", "must have dim components");
            }
            const auto box = m.box ? BoxConstraint::cube(m.dim, m.box->first, m.box->second)
                                   : builtin_objective(m.objective, m.dim).default_box();
            if (!box.contains(m.theta0)) {
                fail("model.theta0", "lies outside the box");
            }
        }
    }
}

std::string fmt(double x) { return csv::format_double(x); }

Value num_list(const std::vector<double>& xs) {
    std::vector<Value> items;
    for (double x : xs) {
        items.push_back(Value::of(x));
    }
    return Value::list(std::move(items));
}

Value matrix_value(const std::vector<std::vector<double>>& rows) {
    std::vector<Value> items;
    for (const auto& r : rows) {
        items.push_back(num_list(r));
    }
    return Value::list(std::move(items));
}

Value range_value(const std::pair<double, double>& r) { return num_list({r.first, r.second}); }

Value word_list(const std::vector<std::string>& xs) {
    std::vector<Value> items;
    for (const auto& x : xs) {
        items.push_back(Value::of(x));
    }
    return Value::list(std::move(items));
}

ExperimentKind parse_kind(const Reader& r, const Entry& e) {
    const std::string k = r.text(e);
    if (k == "linear_example") {
        return ExperimentKind::LinearExample;
    }
    if (k == "qmc") {
        return ExperimentKind::Qmc;
    }
    if (k == "gfo") {
        return ExperimentKind::Gfo;
    }
    throw ParseError(e.line, r.qualified(e), "experiment kind must be linear_example, qmc or gfo");
}

}  // namespace

Value parse_value(const std::string& text) {
    try {
        return ValueParser(text).parse_all();
    } catch (const BadValue& err) {
        throw ParseError(0, "", err.what);
    }
}

std::string format_value(const Value& v) {
    switch (v.kind) {
        case Value::Kind::Number: return fmt(v.number);
        case Value::Kind::Bool: return v.boolean ? "true" : "false";
        case Value::Kind::String: {
            bool bare = is_bare_word(v.text) && v.text != "true" && v.text != "false";
            if (bare) {
                try {
                    (void)Expression(v.text).evaluate();
                    bare = false;
                } catch (const BadValue&) {
                }
            }
            return bare ? v.text : "\"" + v.text + "\"";
        }
        case Value::Kind::List: {
            std::string out = "[";
            for (std::size_t i = 0; i < v.items.size(); ++i) {
                if (i > 0) {
                    out += ", ";
                }
                out += format_value(v.items[i]);
            }
            return out + "]";
        }
    }
    return "";
}

std::vector<Section> parse_sections(const std::string& text) {
    std::vector<Section> sections;
    std::istringstream in(text);
    std::string raw;
    std::size_t line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        std::string line = trim(strip_comment(raw));
        if (line.empty()) {
            continue;
        }
        if (line.front() == '[') {
            if (line.back() != ']') {
                throw ParseError(line_no, "", "malformed section header");
            }
            const std::string name = trim(line.substr(1, line.size() - 2));
            if (!valid_key(name)) {
                throw ParseError(line_no, name, "malformed section name");
            }
            for (const auto& s : sections) {
                if (s.name == name) {
                    throw ParseError(line_no, name, "duplicate section");
                }
            }
            sections.push_back({name, line_no, {}});
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ParseError(line_no, "", "expected 'key = value'");
        }
        const std::string key = trim(line.substr(0, eq));
        if (!valid_key(key)) {
            throw ParseError(line_no, key, "malformed key");
        }
        if (sections.empty()) {
            throw ParseError(line_no, key, "key outside of any section");
        }
        std::string rhs = trim(line.substr(eq + 1));
        const std::size_t start = line_no;
        while (brackets_open(rhs) && std::getline(in, raw)) {
            ++line_no;
            rhs += " " + trim(strip_comment(raw));
        }
        Section& sec = sections.back();
        const std::string qualified = sec.name + "." + key;
        for (const auto& e : sec.entries) {
            if (e.key == key) {
                throw ParseError(start, qualified, "duplicate key");
            }
        }
        Value value;
        try {
            value = ValueParser(rhs).parse_all();
        } catch (const BadValue& err) {
            throw ParseError(start, qualified, err.what);
        }
        sec.entries.push_back({key, std::move(value), start});
    }
    return sections;
}

const char* kind_name(ExperimentKind k) {
    switch (k) {
        case ExperimentKind::LinearExample: return "linear_example";
        case ExperimentKind::Qmc: return "qmc";
        case ExperimentKind::Gfo: return "gfo";
    }
    return "?";
}

bool ExperimentConfig::has_channel(const std::string& c) const {
    return std::find(channels.begin(), channels.end(), c) != channels.end();
}

std::pair<double, double> ExperimentConfig::window() const {
    return analysis.rate_window.value_or(std::make_pair(T / 10.0, T));
}

ExperimentConfig parse_config(const std::string& text, const std::string& default_name) {
    const auto sections = parse_sections(text);
    static const std::set<std::string> known{"experiment", "gain", "probe", "model", "averaging", "analysis", "output"};
    std::map<std::string, const Section*> by_name;
    for (const auto& s : sections) {
        if (!known.count(s.name)) {
            throw ParseError(s.line, s.name, "unknown section");
        }
        by_name[s.name] = &s;
    }
    auto section = [&](const std::string& n) -> const Section* {
        const auto it = by_name.find(n);
        return it == by_name.end() ? nullptr : it->second;
    };
    if (section("experiment") == nullptr) {
        throw ParseError(0, "experiment", "missing [experiment] section");
    }

    ExperimentConfig c;
    Reader ex(section("experiment"), "experiment");
    c.kind = parse_kind(ex, ex.require("kind"));
    c.name = default_name;
    if (const auto* e = ex.find("name")) {
        c.name = ex.text(*e);
    }
    c.T = ex.number(ex.require("T"));
    c.Ts = ex.number(ex.require("Ts"));
    if (const auto* e = ex.find("runs")) {
        c.runs = ex.count(*e);
    }
    if (const auto* e = ex.find("master_seed")) {
        c.master_seed = static_cast<std::uint64_t>(ex.count(*e));
    }
    if (const auto* e = ex.find("store_stride")) {
        c.store_stride = ex.count(*e);
    }
    if (const auto* e = ex.find("channels")) {
        c.channels = ex.words(*e);
    }
    if (const auto* e = ex.find("comparators")) {
        c.comparators = ex.words(*e);
    }
    ex.finish();

    Reader gain(section("gain"), "gain");
    if (!gain.present()) {
        throw ParseError(0, "gain", "missing [gain] section");
    }
    if (const auto* e = gain.find("a0")) {
        c.a0 = gain.number(*e);
    }
    c.rho = gain.numbers_or_scalar(gain.require("rho"));
    if (const auto* e = gain.find("capped")) {
        c.capped = gain.boolean(*e);
    }
    gain.finish();

    Reader model(section("model"), "model");
    if (c.kind == ExperimentKind::LinearExample) {
        c.linear.omega = {std::numbers::pi / 5.0, std::sqrt(3.0) / 5.0, 4.0 / 5.0, std::sqrt(5.0) / 5.0};
        if (const auto* e = model.find("A_star")) {
            c.linear.A_star = model.matrix(*e);
        }
        if (const auto* e = model.find("omega")) {
            c.linear.omega = model.numbers(*e);
        }
        if (const auto* e = model.find("forcing")) {
            c.linear.forcing = model.number(*e);
        }
        if (const auto* e = model.find("theta0")) {
            c.linear.theta0 = model.numbers(*e);
        }
    } else if (c.kind == ExperimentKind::Qmc) {
        if (const auto* e = model.find("target")) {
            c.qmc.target = model.text(*e);
        }
        if (const auto* e = model.find("gamma")) {
            c.qmc.gamma = model.number(*e);
        }
        if (const auto* e = model.find("value")) {
            c.qmc.value = model.number(*e);
        }
        if (const auto* e = model.find("theta0")) {
            c.qmc.theta0 = model.number(*e);
        }
        if (const auto* e = model.find("theta0_draw")) {
            c.qmc.theta0_draw = model.range(*e);
        }
    } else {
        if (const auto* e = model.find("objective")) {
            c.gfo.objective = model.text(*e);
        }
        if (const auto* e = model.find("dim")) {
            c.gfo.dim = model.count(*e);
        }
        if (const auto* e = model.find("epsilon")) {
            c.gfo.epsilon = model.number(*e);
        }
        if (const auto* e = model.find("method")) {
            c.gfo.method = model.text(*e);
        }
        if (const auto* e = model.find("gain_matrix")) {
            c.gfo.gain_matrix = model.matrix(*e);
        }
        if (const auto* e = model.find("box")) {
            c.gfo.box = model.range(*e);
        }
        if (const auto* e = model.find("theta0")) {
            c.gfo.theta0 = model.numbers(*e);
        }
    }
    model.finish();

    Reader probe(section("probe"), "probe");
    if (c.kind == ExperimentKind::LinearExample) {
        if (probe.present()) {
            throw ParseError(section("probe")->line, "probe",
                             "linear_example defines its own probe; remove the [probe] section");
        }
    } else {
        c.probe = default_probe(c.kind);
        // an explicit frequency or phase source replaces the default one
        if (probe.has("omega") || probe.has("log_rational_pairs") || probe.has("omega_draw")) {
            c.probe.omega.clear();
            c.probe.log_rational_pairs.clear();
            c.probe.omega_draw.reset();
        }
        if (probe.has("phi") || probe.has("phi_cycles") || probe.has("phi_draw")) {
            c.probe.phi.clear();
            c.probe.phi_draw.reset();
        }
        if (const auto* e = probe.find("waveform")) {
            c.probe.waveform = probe.text(*e);
        }
        if (const auto* e = probe.find("convention")) {
            c.probe.convention = probe.text(*e);
        }
        if (const auto* e = probe.find("amplitude")) {
            c.probe.amplitude = probe.number(*e);
        }
        if (const auto* e = probe.find("v")) {
            c.probe.v = probe.matrix(*e);
        }
        if (const auto* e = probe.find("omega")) {
            c.probe.omega = probe.numbers(*e);
        }
        if (const auto* e = probe.find("log_rational_pairs")) {
            c.probe.log_rational_pairs = probe.int_pairs(*e);
        }
        if (const auto* e = probe.find("omega_draw")) {
            c.probe.omega_draw = probe.range(*e);
        }
        if (const auto* e = probe.find("omega_scale")) {
            c.probe.omega_scale = probe.number(*e);
        }
        const Entry* cycles = probe.find("phi_cycles");
        const Entry* radians = probe.find("phi");
        if (cycles != nullptr && radians != nullptr) {
            throw ParseError(radians->line, "probe.phi", "give phi_cycles or phi, not both");
        }
        if (cycles != nullptr) {
            if (c.probe.convention != "cycles") {
                throw ParseError(cycles->line, "probe.phi_cycles", "use phi (radians) with sine_radians");
            }
            c.probe.phi = probe.numbers(*cycles);
        }
        if (radians != nullptr) {
            if (c.probe.convention != "sine_radians") {
                throw ParseError(radians->line, "probe.phi", "use phi_cycles with the cycles convention");
            }
            c.probe.phi = probe.numbers(*radians);
        }
        if (const auto* e = probe.find("phi_draw")) {
            c.probe.phi_draw = probe.range(*e);
        }
        probe.finish();
    }

    Reader avg(section("averaging"), "averaging");
    if (!avg.present()) {
        throw ParseError(0, "averaging", "missing [averaging] section");
    }
    c.kappa = avg.number(avg.require("kappa"));
    avg.finish();

    Reader an(section("analysis"), "analysis");
    if (const auto* e = an.find("rate_window")) {
        c.analysis.rate_window = an.range(*e);
    }
    if (const auto* e = an.find("checkpoints")) {
        c.analysis.checkpoints = an.count(*e);
    }
    if (const auto* e = an.find("checkpoint_spacing")) {
        c.analysis.checkpoint_spacing = an.text(*e);
    }
    if (const auto* e = an.find("covariance_channel")) {
        c.analysis.covariance_channel = an.text(*e);
    }
    if (const auto* e = an.find("success_radius")) {
        c.analysis.success_radius = an.number(*e);
    }
    if (c.kind == ExperimentKind::LinearExample) {
        if (const auto* e = an.find("ybar_T")) {
            c.analysis.ybar_T = an.number(*e);
        }
        if (const auto* e = an.find("ybar_dt")) {
            c.analysis.ybar_dt = an.number(*e);
        }
    }
    an.finish();

    Reader out(section("output"), "output");
    if (const auto* e = out.find("dir")) {
        c.output.dir = out.text(*e);
    }
    if (const auto* e = out.find("series")) {
        c.output.series = out.text(*e);
    }
    if (const auto* e = out.find("points_per_decade")) {
        c.output.points_per_decade = out.count(*e);
    }
    out.finish();

    validate(c);
    return c;
}

void validate(const ExperimentConfig& c) {
    if (c.name.empty() || !is_bare_word(c.name) || c.name.find('/') != std::string::npos) {
        fail("experiment.name", "must be a plain word usable as a directory name");
    }
    if (!positive_finite(c.Ts)) {
        fail("experiment.Ts", "must be > 0");
    }
    if (!std::isfinite(c.T) || !(c.T >= c.Ts)) {
        fail("experiment.T", "must satisfy T >= Ts");
    }
    if (c.runs == 0) {
        fail("experiment.runs", "must be >= 1");
    }
    if (c.store_stride == 0) {
        fail("experiment.store_stride", "must be >= 1");
    }
    for (const auto& ch : c.channels) {
        if (ch != "raw" && ch != "pr" && ch != "fb") {
            fail("experiment.channels", "unknown channel '" + ch + "'");
        }
    }
    if (!c.has_channel("pr")) {
        fail("experiment.channels", "the pr channel is required");
    }
    std::set<std::string> seen;
    for (const auto& cmp : c.comparators) {
        const bool ok = (c.kind == ExperimentKind::Qmc && cmp == "mc") ||
                        (c.kind == ExperimentKind::Gfo && (cmp == "spsa1" || cmp == "spsa2"));
        if (!ok) {
            fail("experiment.comparators", "'" + cmp + "' is not available for " + kind_name(c.kind));
        }
        if (!seen.insert(cmp).second) {
            fail("experiment.comparators", "duplicate comparator '" + cmp + "'");
        }
    }
    if (!positive_finite(c.a0)) {
        fail("gain.a0", "must be > 0");
    }
    if (c.rho.empty()) {
        fail("gain.rho", "needs at least one value");
    }
    for (double r : c.rho) {
        if (!(r > 0.0 && r <= 1.0)) {
            fail("gain.rho", "values must lie in (0, 1]");
        }
    }
    if (!(c.kappa > 1.0) || !std::isfinite(c.kappa)) {
        fail("averaging.kappa", "must be > 1");
    }
    validate_model(c);
    if (c.kind != ExperimentKind::LinearExample) {
        validate_probe(c);
        if (c.kind == ExperimentKind::Gfo && c.probe.waveform == "triangle" &&
            std::find(c.comparators.begin(), c.comparators.end(), "spsa1") != c.comparators.end()) {
            fail("experiment.comparators", "spsa comparators need a sinusoidal probe covariance");
        }
    }
    const auto [lo, hi] = c.window();
    if (!(lo > 0.0) || !(lo < hi) || hi > c.T * (1.0 + 1e-12)) {
        fail("analysis.rate_window", "must satisfy 0 < lo < hi <= T");
    }
    if (c.analysis.checkpoints == 0) {
        fail("analysis.checkpoints", "must be >= 1");
    }
    if (c.analysis.checkpoint_spacing != "log" && c.analysis.checkpoint_spacing != "linear") {
        fail("analysis.checkpoint_spacing", "must be log or linear");
    }
    const auto& cc = c.analysis.covariance_channel;
    if (cc != "raw" && cc != "pr" && cc != "fb") {
        fail("analysis.covariance_channel", "must be raw, pr or fb");
    }
    if (!c.has_channel(cc)) {
        fail("analysis.covariance_channel", "channel '" + cc + "' is not emitted");
    }
    if (c.analysis.success_radius && !positive_finite(*c.analysis.success_radius)) {
        fail("analysis.success_radius", "must be > 0");
    }
    if (c.analysis.ybar_T) {
        if (!positive_finite(c.analysis.ybar_dt) || !(*c.analysis.ybar_T >= c.analysis.ybar_dt)) {
            fail("analysis.ybar_T", "must satisfy ybar_T >= ybar_dt > 0");
        }
    }
    if (c.output.dir.empty()) {
        fail("output.dir", "must not be empty");
    }
    if (c.output.series != "log" && c.output.series != "full") {
        fail("output.series", "must be log or full");
    }
    if (c.output.points_per_decade < 2) {
        fail("output.points_per_decade", "must be >= 2");
    }
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot read config '" + path + "'");
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str(), std::filesystem::path(path).stem().string());
}

std::string serialize(const ExperimentConfig& c) {
    std::ostringstream os;
    auto put = [&](const std::string& key, const Value& v) { os << key << " = " << format_value(v) << "\n"; };

    os << "[experiment]\n";
    put("kind", Value::of(std::string(kind_name(c.kind))));
    put("name", Value::of(c.name));
    put("T", Value::of(c.T));
    put("Ts", Value::of(c.Ts));
    put("runs", Value::of(static_cast<double>(c.runs)));
    put("master_seed", Value::of(static_cast<double>(c.master_seed)));
    put("store_stride", Value::of(static_cast<double>(c.store_stride)));
    put("channels", word_list(c.channels));
    put("comparators", word_list(c.comparators));

    os << "\n[gain]\n";
    put("a0", Value::of(c.a0));
    put("rho", num_list(c.rho));
    put("capped", Value::of(c.capped));

    if (c.kind != ExperimentKind::LinearExample) {
        const auto& p = c.probe;
        os << "\n[probe]\n";
        put("waveform", Value::of(p.waveform));
        put("convention", Value::of(p.convention));
        put("amplitude", Value::of(p.amplitude));
        if (!p.v.empty()) {
            put("v", matrix_value(p.v));
        }
        if (!p.omega.empty()) {
            put("omega", num_list(p.omega));
        }
        if (!p.log_rational_pairs.empty()) {
            std::vector<std::vector<double>> rows;
            for (const auto& [a, b] : p.log_rational_pairs) {
                rows.push_back({static_cast<double>(a), static_cast<double>(b)});
            }
            put("log_rational_pairs", matrix_value(rows));
        }
        if (p.omega_draw) {
            put("omega_draw", range_value(*p.omega_draw));
        }
        put("omega_scale", Value::of(p.omega_scale));
        if (!p.phi.empty()) {
            put(p.convention == "cycles" ? "phi_cycles" : "phi", num_list(p.phi));
        }
        if (p.phi_draw) {
            put("phi_draw", range_value(*p.phi_draw));
        }
    }

    os << "\n[model]\n";
    if (c.kind == ExperimentKind::LinearExample) {
        put("A_star", matrix_value(c.linear.A_star));
        put("omega", num_list(c.linear.omega));
        put("forcing", Value::of(c.linear.forcing));
        put("theta0", num_list(c.linear.theta0));
    } else if (c.kind == ExperimentKind::Qmc) {
        put("target", Value::of(c.qmc.target));
        put("gamma", Value::of(c.qmc.gamma));
        put("value", Value::of(c.qmc.value));
        if (c.qmc.theta0) {
            put("theta0", Value::of(*c.qmc.theta0));
        }
        put("theta0_draw", range_value(c.qmc.theta0_draw));
    } else {
        put("objective", Value::of(c.gfo.objective));
        put("dim", Value::of(static_cast<double>(c.gfo.dim)));
        put("epsilon", Value::of(c.gfo.epsilon));
        put("method", Value::of(c.gfo.method));
        if (!c.gfo.gain_matrix.empty()) {
            put("gain_matrix", matrix_value(c.gfo.gain_matrix));
        }
        if (c.gfo.box) {
            put("box", range_value(*c.gfo.box));
        }
        if (!c.gfo.theta0.empty()) {
            put("theta0", num_list(c.gfo.theta0));
        }
    }

    os << "\n[averaging]\n";
    put("kappa", Value::of(c.kappa));

    os << "\n[analysis]\n";
    if (c.analysis.rate_window) {
        put("rate_window", range_value(*c.analysis.rate_window));
    }
    put("checkpoints", Value::of(static_cast<double>(c.analysis.checkpoints)));
    put("checkpoint_spacing", Value::of(c.analysis.checkpoint_spacing));
    put("covariance_channel", Value::of(c.analysis.covariance_channel));
    if (c.analysis.success_radius) {
        put("success_radius", Value::of(*c.analysis.success_radius));
    }
    if (c.kind == ExperimentKind::LinearExample) {
        if (c.analysis.ybar_T) {
            put("ybar_T", Value::of(*c.analysis.ybar_T));
        }
        put("ybar_dt", Value::of(c.analysis.ybar_dt));
    }

    os << "\n[output]\n";
    put("dir", Value::of(c.output.dir));
    put("series", Value::of(c.output.series));
    put("points_per_decade", Value::of(static_cast<double>(c.output.points_per_decade)));
    return os.str();
}

}  // namespace qsa::config
