#include "mcam/director.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdlib>
#include <regex>
#include <sstream>

#include <httplib.h>

#include "mcam/errors.hpp"
#include "mcam/tensor_io.hpp"

#ifndef MCAM_SOURCE_DATA_DIR
#define MCAM_SOURCE_DATA_DIR "data"
#endif

namespace mcam {

namespace {

std::string lower(std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

std::string trim(const std::string& s) {
    size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

std::string collapse_spaces(const std::string& s) {
    std::string out;
    bool space = false;
    for (char c : s) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            space = true;
            continue;
        }
        if (space && !out.empty()) out += ' ';
        space = false;
        out += c;
    }
    return out;
}

bool is_word(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '\'' || c == '-'; }

// Position of `phrase` in `text` (both lowercase) at word boundaries, or npos.
size_t find_phrase(const std::string& text, const std::string& phrase, size_t from = 0) {
    if (phrase.empty()) return std::string::npos;
    for (size_t pos = text.find(phrase, from); pos != std::string::npos; pos = text.find(phrase, pos + 1)) {
        const bool left = pos == 0 || !is_word(text[pos - 1]) || !is_word(phrase.front());
        const size_t end = pos + phrase.size();
        const bool right = end >= text.size() || !is_word(text[end]) || !is_word(phrase.back());
        if (left && right) return pos;
    }
    return std::string::npos;
}

// Blanks every occurrence of `phrase` in both the original and its lowercase copy.
void erase_phrase(std::string& text, std::string& low, const std::string& phrase) {
    for (size_t pos = find_phrase(low, phrase); pos != std::string::npos; pos = find_phrase(low, phrase, pos)) {
        std::fill(text.begin() + static_cast<std::ptrdiff_t>(pos),
                  text.begin() + static_cast<std::ptrdiff_t>(pos + phrase.size()), ' ');
        std::fill(low.begin() + static_cast<std::ptrdiff_t>(pos),
                  low.begin() + static_cast<std::ptrdiff_t>(pos + phrase.size()), ' ');
    }
}

std::vector<std::string> by_length(std::vector<std::string> v) {
    std::stable_sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.size() > b.size(); });
    return v;
}

struct Segment {
    std::string text;
    bool connective = false;
};

std::vector<Segment> split_segments(const std::string& instruction, const PhraseTable& table) {
    std::vector<Segment> out;
    std::string sentence;
    auto flush_sentence = [&] {
        std::string low = lower(sentence);
        // Cut points: connectives at the sentence start or after ',' / "and".
        std::vector<std::pair<size_t, size_t>> cuts;
        for (const auto& word : table.connectives) {
            for (size_t pos = find_phrase(low, word); pos != std::string::npos; pos = find_phrase(low, word, pos + 1)) {
                std::string before = trim(low.substr(0, pos));
                const bool at_start = before.empty();
                const bool after_comma = !before.empty() && before.back() == ',';
                const bool after_and = before.size() >= 3 && before.compare(before.size() - 3, 3, "and") == 0 &&
                                       (before.size() == 3 || !is_word(before[before.size() - 4]));
                if (at_start || after_comma || after_and) cuts.emplace_back(pos, word.size());
            }
        }
        std::sort(cuts.begin(), cuts.end());
        size_t start = 0;
        bool connective = false;
        for (const auto& [pos, len] : cuts) {
            if (pos < start) continue;
            std::string piece = sentence.substr(start, pos - start);
            // A trailing "and" belongs to the connective ("and then").
            std::string plow = lower(trim(piece));
            if (plow.size() >= 3 && plow.compare(plow.size() - 3, 3, "and") == 0) piece = trim(piece).substr(0, trim(piece).size() - 3);
            if (!trim(piece).empty()) out.push_back({piece, connective});
            start = pos + len;
            connective = true;
        }
        const std::string rest = sentence.substr(start);
        if (!trim(rest).empty()) out.push_back({rest, connective});
        sentence.clear();
    };
    for (char c : instruction) {
        if (c == '.' || c == '!' || c == '?' || c == ';' || c == '\n') {
            flush_sentence();
        } else {
            sentence += c;
        }
    }
    flush_sentence();
    return out;
}

std::string strip_tokens(std::string clause, const PhraseTable& table) {
    auto strip_chars = [](std::string s) {
        const std::string junk = " \t\"'`,:";
        const size_t a = s.find_first_not_of(junk);
        if (a == std::string::npos) return std::string();
        const size_t b = s.find_last_not_of(junk);
        return s.substr(a, b - a + 1);
    };
    clause = strip_chars(collapse_spaces(clause));
    for (bool changed = true; changed && !clause.empty();) {
        changed = false;
        const std::string low = lower(clause);
        for (const auto& w : table.leading) {
            if (low == w) {
                clause.clear();
                changed = true;
                break;
            }
            if (low.size() > w.size() && low.compare(0, w.size(), w) == 0 && low[w.size()] == ' ') {
                clause = strip_chars(clause.substr(w.size()));
                changed = true;
                break;
            }
        }
        if (changed || clause.empty()) continue;
        const std::string low2 = lower(clause);
        for (const auto& w : table.trailing) {
            if (low2.size() > w.size() && low2.compare(low2.size() - w.size(), w.size(), w) == 0 &&
                low2[low2.size() - w.size() - 1] == ' ') {
                clause = strip_chars(clause.substr(0, clause.size() - w.size()));
                changed = true;
                break;
            }
        }
    }
    return clause;
}

struct ParsedSegment {
    std::optional<BasicMotion> motion;
    std::string description;
    bool exit_only = false;
};

ParsedSegment parse_segment(const std::string& segment, const PhraseTable& table) {
    ParsedSegment out;
    std::string text = segment, low = lower(segment);
    for (const auto& [phrase, m] : table.motion)
        if (find_phrase(low, phrase) != std::string::npos) {
            out.motion = m;
            break;
        }
    bool has_exit = false;
    for (const auto& e : table.exit) has_exit = has_exit || find_phrase(low, e) != std::string::npos;
    if (has_exit && !out.motion) {
        out.exit_only = true;
        return out;
    }

    std::vector<std::string> motion_phrases;
    for (const auto& [phrase, m] : table.motion) motion_phrases.push_back(phrase);
    for (const auto& p : by_length(motion_phrases)) erase_phrase(text, low, p);
    for (const auto& p : by_length(table.filler)) erase_phrase(text, low, p);

    // Split into clauses at the break markers.
    std::vector<std::string> clauses{text};
    for (const auto& brk : table.clause_breaks) {
        std::vector<std::string> next;
        for (const auto& c : clauses) {
            const std::string cl = lower(c);
            size_t start = 0;
            for (size_t pos = cl.find(brk); pos != std::string::npos; pos = cl.find(brk, start)) {
                next.push_back(c.substr(start, pos - start));
                start = pos + brk.size();
            }
            next.push_back(c.substr(start));
        }
        clauses = std::move(next);
    }
    auto mentions_exit = [&](const std::string& c) {
        const std::string cl = lower(c);
        for (const auto& e : table.exit)
            if (find_phrase(cl, e) != std::string::npos) return true;
        return false;
    };
    std::vector<std::string> kept;
    auto keep = [&](const std::string& c) {
        const std::string cleaned = strip_tokens(c, table);
        if (!cleaned.empty()) kept.push_back(cleaned);
    };
    for (const auto& c : clauses) {
        if (!mentions_exit(c)) {
            keep(c);
            continue;
        }
        // Keep the "and"-joined parts that do not leave the frame.
        const std::string cl = lower(c);
        size_t start = 0;
        for (size_t pos = find_phrase(cl, "and"); ; pos = find_phrase(cl, "and", start)) {
            const std::string part = c.substr(start, pos == std::string::npos ? std::string::npos : pos - start);
            if (!mentions_exit(part)) keep(part);
            if (pos == std::string::npos) break;
            start = pos + 3;
        }
    }
    for (size_t i = 0; i < kept.size(); ++i) out.description += (i ? ", " : "") + kept[i];
    return out;
}

std::string bare_instruction(const std::string& instruction) {
    std::string s = collapse_spaces(trim(instruction));
    while (!s.empty() && std::string(".!?;").find(s.back()) != std::string::npos) s.pop_back();
    return s;
}

void append_description(std::string& target, const std::string& extra) {
    if (extra.empty()) return;
    target += (target.empty() ? "" : ", ") + extra;
}

}  // namespace

std::string build_director_prompt(const std::string& instruction) {
    return std::string(kDirectorPrompt) + "\n\n" + instruction;
}

std::string provenance_name(Provenance p) { return p == Provenance::Llm ? "LLM" : "FALLBACK"; }

void to_json(nlohmann::json& j, const SceneSpec& s) {
    j = {{"index", s.index}, {"description", s.description}, {"action", s.action.name()}, {"clip_length", s.clip_length}};
}

void from_json(const nlohmann::json& j, SceneSpec& s) {
    s.index = j.at("index").get<int64_t>();
    s.description = j.at("description").get<std::string>();
    s.action = MotionPattern::parse(j.at("action").get<std::string>());
    s.clip_length = j.value("clip_length", kDefaultClipLength);
}

void to_json(nlohmann::json& j, const StoryBoard& b) {
    j = {{"instruction", b.instruction}, {"provenance", provenance_name(b.provenance)}, {"scenes", b.scenes}};
}

void from_json(const nlohmann::json& j, StoryBoard& b) {
    b.instruction = j.value("instruction", "");
    const std::string p = j.value("provenance", "FALLBACK");
    if (p != "LLM" && p != "FALLBACK") throw FormatError("unknown storyboard provenance '" + p + "'");
    b.provenance = p == "LLM" ? Provenance::Llm : Provenance::Fallback;
    b.scenes = j.at("scenes").get<std::vector<SceneSpec>>();
}

StoryBoard parse_llm_response(const std::string& text) {
    static const std::regex record(R"(scene\s*(\d+)\s*:\s*([\s\S]*?)\baction\s*:\s*([^\]\n]*))",
                                   std::regex::icase | std::regex::ECMAScript);
    StoryBoard board;
    board.provenance = Provenance::Llm;
    std::vector<int64_t> numbers;
    for (auto it = std::sregex_iterator(text.begin(), text.end(), record); it != std::sregex_iterator(); ++it) {
        std::string desc = (*it)[2].str();
        for (const char* q : {"\xE2\x80\x9C", "\xE2\x80\x9D", "``", "''"}) {
            for (size_t pos = desc.find(q); pos != std::string::npos; pos = desc.find(q)) desc.erase(pos, std::string(q).size());
        }
        desc = collapse_spaces(desc);
        const std::string junk = " \t\"',;[]";
        const size_t a = desc.find_first_not_of(junk), b = desc.find_last_not_of(junk);
        desc = a == std::string::npos ? "" : desc.substr(a, b - a + 1);
        std::string action = trim((*it)[3].str());
        while (!action.empty() && std::string(".,;\"'`").find(action.back()) != std::string::npos) action.pop_back();
        SceneSpec s;
        s.description = desc;
        s.action = MotionPattern::parse(trim(action));
        numbers.push_back(std::stoll((*it)[1].str()));
        board.scenes.push_back(std::move(s));
    }
    if (board.scenes.empty()) throw FormatError("no \"Scene k: ..., Action: ...\" records in reply:\n" + text);
    bool renumbered = false;
    for (size_t i = 0; i < board.scenes.size(); ++i) {
        board.scenes[i].index = static_cast<int64_t>(i) + 1;
        renumbered = renumbered || numbers[i] != static_cast<int64_t>(i) + 1;
    }
    if (renumbered) {
        std::ostringstream os;
        os << "warning: scene numbers";
        for (auto n : numbers) os << ' ' << n;
        os << " renumbered to 1.." << numbers.size();
        board.diagnostics.push_back(os.str());
    }
    for (const auto& s : board.scenes)
        if (s.description.empty()) throw FormatError("scene " + std::to_string(s.index) + " has an empty description");
    return board;
}

PhraseTable PhraseTable::from_json(const nlohmann::json& j) {
    PhraseTable t;
    for (const auto& entry : j.at("motion")) {
        const std::string name = entry.at(1).get<std::string>();
        const auto m = parse_basic_motion(name);
        if (!m) throw ValidationError("phrase table names unknown motion '" + name + "'");
        t.motion.emplace_back(lower(entry.at(0).get<std::string>()), *m);
    }
    auto words = [&](const char* key) {
        std::vector<std::string> v;
        for (const auto& w : j.value(key, nlohmann::json::array())) v.push_back(lower(w.get<std::string>()));
        return v;
    };
    t.connectives = words("connectives");
    t.clause_breaks = words("clause_breaks");
    t.exit = words("exit");
    t.filler = words("filler");
    t.leading = words("leading");
    t.trailing = words("trailing");
    return t;
}

PhraseTable PhraseTable::load(const std::filesystem::path& path) {
    try {
        return from_json(read_json_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("phrase table " + path.string() + ": " + e.what());
    }
}

std::filesystem::path data_dir() {
    if (const char* env = std::getenv("MCAM_DATA_DIR"); env && *env) return env;
    return MCAM_SOURCE_DATA_DIR;
}

const PhraseTable& PhraseTable::defaults() {
    static const PhraseTable table = load(data_dir() / "director_phrases.json");
    return table;
}

StoryBoard fallback_parse(const std::string& instruction, const PhraseTable& table) {
    if (trim(instruction).empty()) throw InputError("empty instruction");
    StoryBoard board;
    board.instruction = instruction;
    board.provenance = Provenance::Fallback;
    std::vector<bool> has_action;
    for (const Segment& seg : split_segments(instruction, table)) {
        const ParsedSegment p = parse_segment(seg.text, table);
        if (p.exit_only) continue;
        const bool open_scene = !board.scenes.empty() && !has_action.back() && !seg.connective;
        if (board.scenes.empty() || (p.motion && !open_scene)) {
            SceneSpec s;
            s.index = static_cast<int64_t>(board.scenes.size()) + 1;
            s.description = p.description;
            if (p.motion) s.action = *p.motion;
            board.scenes.push_back(std::move(s));
            has_action.push_back(p.motion.has_value());
        } else {
            SceneSpec& cur = board.scenes.back();
            if (p.motion) {
                cur.action = *p.motion;
                has_action.back() = true;
            }
            append_description(cur.description, p.description);
        }
    }
    if (board.scenes.empty()) {
        SceneSpec s;
        s.description = bare_instruction(instruction);
        board.scenes.push_back(s);
    }
    for (size_t i = 0; i < board.scenes.size(); ++i) {
        if (!board.scenes[i].description.empty()) continue;
        board.scenes[i].description =
            i > 0 ? board.scenes[i - 1].description : bare_instruction(instruction);
        board.diagnostics.push_back("scene " + std::to_string(i + 1) + " has no description of its own");
    }
    return board;
}

StoryBoard validate(StoryBoard board, const CamOperatorPool& pool) {
    if (board.scenes.empty()) throw ValidationError("storyboard has no scenes");
    for (size_t i = 0; i < board.scenes.size(); ++i) {
        SceneSpec& s = board.scenes[i];
        if (s.index != static_cast<int64_t>(i) + 1)
            throw ValidationError("scene indices must run 1.." + std::to_string(board.scenes.size()));
        if (trim(s.description).empty()) throw ValidationError("scene " + std::to_string(s.index) + " has no description");
        for (const auto& [m, w] : s.action.entries())
            if (!pool.has(m))
                throw ValidationError("scene " + std::to_string(s.index) + " action " + s.action.name() + ": pattern " +
                                      motion_name(m) + " is not in the motion pool");
        if (s.clip_length <= 0) s.clip_length = kDefaultClipLength;
    }
    return board;
}

void DirectorConfig::validate() const {
    if (!(timeout_s > 0)) throw ParameterError("director timeout must be > 0");
    if (retries < 0) throw ParameterError("director retries must be >= 0");
}

void to_json(nlohmann::json& j, const DirectorConfig& c) {
    j = {{"endpoint", c.endpoint}, {"model", c.model}, {"timeout_s", c.timeout_s}, {"retries", c.retries},
         {"token_env", c.token_env}};
}

void from_json(const nlohmann::json& j, DirectorConfig& c) {
    c.endpoint = j.value("endpoint", c.endpoint);
    c.model = j.value("model", c.model);
    c.timeout_s = j.value("timeout_s", c.timeout_s);
    c.retries = j.value("retries", c.retries);
    c.token_env = j.value("token_env", c.token_env);
}

std::string HttpTransport::complete(const std::string& prompt, double timeout_s) {
    static const std::regex url(R"(^(https?://[^/]+)(/.*)?$)");
    std::smatch m;
    if (!std::regex_match(config_.endpoint, m, url)) throw ParameterError("bad director endpoint '" + config_.endpoint + "'");
    std::string base = m[2].str();
    while (!base.empty() && base.back() == '/') base.pop_back();
    httplib::Client cli(m[1].str());
    const auto secs = static_cast<time_t>(timeout_s);
    const auto usecs = static_cast<time_t>((timeout_s - static_cast<double>(secs)) * 1e6);
    cli.set_connection_timeout(secs, usecs);
    cli.set_read_timeout(secs, usecs);
    cli.set_write_timeout(secs, usecs);
    httplib::Headers headers;
    if (const char* token = std::getenv(config_.token_env.c_str()); token && *token)
        headers.emplace("Authorization", std::string("Bearer ") + token);
    const nlohmann::json body = {{"model", config_.model},
                                 {"messages", {{{"role", "user"}, {"content", prompt}}}},
                                 {"temperature", 0}};
    auto res = cli.Post(base + "/v1/chat/completions", headers, body.dump(), "application/json");
    if (!res) throw IoError("director request failed: " + httplib::to_string(res.error()));
    if (res->status != 200) throw IoError("director endpoint returned HTTP " + std::to_string(res->status));
    try {
        return nlohmann::json::parse(res->body).at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("unexpected chat completion body: ") + e.what());
    }
}

std::string CannedTransport::complete(const std::string& prompt, double) {
    prompts_.push_back(prompt);
    if (replies_.empty()) throw IoError("no canned reply");
    const auto& reply = replies_[std::min(next_, replies_.size() - 1)];
    ++next_;
    if (!reply) throw IoError("canned transport failure");
    return *reply;
}

DirectorClient::DirectorClient(DirectorConfig config, std::shared_ptr<DirectorTransport> transport)
    : config_(std::move(config)), transport_(std::move(transport)) {
    config_.validate();
    if (!transport_) throw ParameterError("director client needs a transport");
}

StoryBoard DirectorClient::request(const std::string& instruction) const {
    using clock = std::chrono::steady_clock;
    const auto deadline =
        clock::now() + std::chrono::duration_cast<clock::duration>(
                           std::chrono::duration<double>(config_.timeout_s * (config_.retries + 1)));
    const std::string prompt = build_director_prompt(instruction);
    std::vector<std::string> diagnostics;
    for (int attempt = 0; attempt <= config_.retries; ++attempt) {
        const double remaining = std::chrono::duration<double>(deadline - clock::now()).count();
        if (remaining <= 0) {
            diagnostics.push_back("deadline reached before attempt " + std::to_string(attempt + 1));
            break;
        }
        try {
            StoryBoard board = parse_llm_response(transport_->complete(prompt, std::min(config_.timeout_s, remaining)));
            board.instruction = instruction;
            board.provenance = Provenance::Llm;
            return board;
        } catch (const Error& e) {
            diagnostics.push_back("attempt " + std::to_string(attempt + 1) + ": " + e.category() + ": " + e.what());
        }
    }
    std::string msg = "director gave no usable reply";
    for (const auto& d : diagnostics) msg += "\n  " + d;
    throw DecompositionError(msg);
}

StoryBoard decompose(const std::string& instruction, const DirectorClient* client, const PhraseTable& table) {
    if (trim(instruction).empty()) throw InputError("empty instruction");
    std::vector<std::string> diagnostics;
    if (client) {
        try {
            return client->request(instruction);
        } catch (const DecompositionError& e) {
            diagnostics.emplace_back(e.what());
        }
    }
    StoryBoard board = fallback_parse(instruction, table);
    if (board.scenes.empty()) throw DecompositionError("no scenes found in instruction");
    board.diagnostics.insert(board.diagnostics.begin(), diagnostics.begin(), diagnostics.end());
    return board;
}

}  // namespace mcam
