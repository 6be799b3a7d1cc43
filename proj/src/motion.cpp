#include "mcam/motion.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <sstream>

#include "mcam/errors.hpp"

namespace mcam {

namespace {

std::string squash(std::string_view s) {
    std::string out;
    for (char c : s)
        if (!std::isspace(static_cast<unsigned char>(c)) && c != '_' && c != '-')
            out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

std::string trim(std::string_view s) {
    size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

std::string format_weight(float w) {
    std::ostringstream os;
    os << w;
    return os.str();
}

}  // namespace

std::string motion_name(BasicMotion m) {
    switch (m) {
        case BasicMotion::ZoomIn: return "ZoomIn";
        case BasicMotion::ZoomOut: return "ZoomOut";
        case BasicMotion::PanLeft: return "PanLeft";
        case BasicMotion::PanRight: return "PanRight";
        case BasicMotion::TiltUp: return "TiltUp";
        case BasicMotion::TiltDown: return "TiltDown";
    }
    return "?";
}

std::optional<BasicMotion> parse_basic_motion(std::string_view name) {
    const std::string key = squash(name);
    for (BasicMotion m : kBasicMotions)
        if (squash(motion_name(m)) == key) return m;
    return std::nullopt;
}

ContentFlow content_flow(BasicMotion m) {
    switch (m) {
        case BasicMotion::ZoomIn: return {0, 0, 1};
        case BasicMotion::ZoomOut: return {0, 0, -1};
        case BasicMotion::PanLeft: return {1, 0, 0};
        case BasicMotion::PanRight: return {-1, 0, 0};
        case BasicMotion::TiltUp: return {0, 1, 0};
        case BasicMotion::TiltDown: return {0, -1, 0};
    }
    return {};
}

MotionPattern MotionPattern::composite(std::vector<Entry> entries) {
    if (entries.size() < 2) throw ValidationError("a composite motion needs at least two basic patterns");
    for (const auto& [m, w] : entries)
        if (!(w > 0.0f)) throw ValidationError("composite weight for " + motion_name(m) + " must be > 0");
    MotionPattern p;
    p.entries_ = std::move(entries);
    return p;
}

BasicMotion MotionPattern::basic() const {
    if (!is_basic()) throw ValidationError("motion '" + name() + "' is not a basic pattern");
    return entries_.front().first;
}

bool MotionPattern::contains(BasicMotion m) const {
    return std::any_of(entries_.begin(), entries_.end(), [m](const Entry& e) { return e.first == m; });
}

bool MotionPattern::same_basics(const MotionPattern& other) const {
    std::multiset<BasicMotion> a, b;
    for (const auto& e : entries_) a.insert(e.first);
    for (const auto& e : other.entries_) b.insert(e.first);
    return a == b;
}

std::string MotionPattern::name() const {
    if (is_static()) return "Static";
    std::string out;
    for (const auto& [m, w] : entries_) {
        if (!out.empty()) out += "+";
        out += motion_name(m);
        if (w != 1.0f) out += ":" + format_weight(w);
    }
    return out;
}

std::vector<std::string> allowed_motion_names() {
    std::vector<std::string> out;
    for (BasicMotion m : kBasicMotions) out.push_back(motion_name(m));
    out.push_back("Static");
    return out;
}

MotionPattern MotionPattern::parse(std::string_view text) {
    std::string s = trim(text);
    // Normalize separators: '+', '&', ',' and the word "and".
    std::string lowered;
    for (char c : s) lowered += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    std::vector<std::string> parts;
    std::string cur;
    for (size_t i = 0; i < s.size(); ++i) {
        const char c = s[i];
        const bool word_and = lowered.compare(i, 5, " and ") == 0;
        if (c == '+' || c == '&' || c == ',' || word_and) {
            parts.push_back(cur);
            cur.clear();
            if (word_and) i += 4;
            continue;
        }
        cur += c;
    }
    parts.push_back(cur);

    std::vector<Entry> entries;
    for (const auto& raw : parts) {
        std::string part = trim(raw);
        float weight = 1.0f;
        if (const auto colon = part.find(':'); colon != std::string::npos) {
            try {
                weight = std::stof(part.substr(colon + 1));
            } catch (const std::logic_error&) {
                throw ValidationError("bad motion weight in '" + part + "'");
            }
            part = trim(part.substr(0, colon));
        }
        if (squash(part) == "static" && parts.size() == 1) return {};
        const auto m = parse_basic_motion(part);
        if (!m) {
            std::string allowed;
            for (const auto& n : allowed_motion_names()) allowed += (allowed.empty() ? "" : ", ") + n;
            throw ValidationError("unknown action '" + part + "'; allowed: " + allowed);
        }
        entries.emplace_back(*m, weight);
    }
    if (entries.size() == 1) {
        MotionPattern p(entries[0].first);
        if (entries[0].second != 1.0f) throw ValidationError("a weight is only meaningful inside a composite");
        return p;
    }
    return composite(std::move(entries));
}

}  // namespace mcam
