#pragma once

// Turns a multi-scene instruction into an ordered storyboard of scene
// descriptions and camera actions, through a chat-completion model when one is
// configured and a deterministic phrase grammar otherwise.

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "mcam/cam_operator.hpp"
#include "mcam/motion.hpp"

namespace mcam {

inline constexpr int64_t kDefaultClipLength = 16;

// The extraction instruction sent ahead of the user's text.
inline constexpr const char* kDirectorPrompt =
    "Extract the scenes that appear in the given text in order, and identify the transition actions between "
    "adjacent scenes. The scene description should contain rich information. You should pick the transition "
    "action from [Zoom In, Zoom Out, Pan Left, Pan Right, Tilt Up, Tilt Down]";

std::string build_director_prompt(const std::string& instruction);

struct SceneSpec {
    int64_t index = 1;
    std::string description;
    MotionPattern action;
    int64_t clip_length = kDefaultClipLength;

    bool operator==(const SceneSpec&) const = default;
};

enum class Provenance { Llm, Fallback };
std::string provenance_name(Provenance p);

struct StoryBoard {
    std::vector<SceneSpec> scenes;
    std::string instruction;
    Provenance provenance = Provenance::Fallback;
    std::vector<std::string> diagnostics;  // not serialized

    bool operator==(const StoryBoard& o) const {
        return scenes == o.scenes && instruction == o.instruction && provenance == o.provenance;
    }
};

void to_json(nlohmann::json& j, const SceneSpec& s);
void from_json(const nlohmann::json& j, SceneSpec& s);
void to_json(nlohmann::json& j, const StoryBoard& b);
void from_json(const nlohmann::json& j, StoryBoard& b);

// "Scene k: <desc>, Action: <name>" records, bracketed or not, possibly spanning lines.
// Throws ValidationError on an unknown action and FormatError when nothing parses.
StoryBoard parse_llm_response(const std::string& text);

// Phrase lists driving the fallback grammar. Motion phrases are tried in order,
// so earlier entries take precedence.
struct PhraseTable {
    std::vector<std::pair<std::string, BasicMotion>> motion;
    std::vector<std::string> connectives;
    std::vector<std::string> clause_breaks;
    std::vector<std::string> exit;
    std::vector<std::string> filler;
    std::vector<std::string> leading;
    std::vector<std::string> trailing;

    static PhraseTable from_json(const nlohmann::json& j);
    static PhraseTable load(const std::filesystem::path& path);
    // data/director_phrases.json from the source tree, or $MCAM_DATA_DIR.
    static const PhraseTable& defaults();
};

std::filesystem::path data_dir();

StoryBoard fallback_parse(const std::string& instruction, const PhraseTable& table = PhraseTable::defaults());

// Every action must be Static or built from pool patterns; fills missing clip lengths.
StoryBoard validate(StoryBoard board, const CamOperatorPool& pool);

// Send a prompt, receive the reply text. Throws IoError on transport failure.
class DirectorTransport {
public:
    virtual ~DirectorTransport() = default;
    virtual std::string complete(const std::string& prompt, double timeout_s) = 0;
};

struct DirectorConfig {
    std::string endpoint = "http://127.0.0.1:8080";
    std::string model = "gpt-4";
    double timeout_s = 30.0;
    int retries = 2;
    std::string token_env = "MCAM_LLM_TOKEN";

    void validate() const;
};

void to_json(nlohmann::json& j, const DirectorConfig& c);
void from_json(const nlohmann::json& j, DirectorConfig& c);

// OpenAI-style chat completions over plain HTTP.
class HttpTransport final : public DirectorTransport {
public:
    explicit HttpTransport(DirectorConfig config) : config_(std::move(config)) {}
    std::string complete(const std::string& prompt, double timeout_s) override;

private:
    DirectorConfig config_;
};

// Replays fixed replies in order (the last one repeats); an empty optional simulates a transport failure.
class CannedTransport final : public DirectorTransport {
public:
    explicit CannedTransport(std::vector<std::optional<std::string>> replies) : replies_(std::move(replies)) {}
    std::string complete(const std::string& prompt, double timeout_s) override;

    const std::vector<std::string>& prompts() const { return prompts_; }

private:
    std::vector<std::optional<std::string>> replies_;
    std::vector<std::string> prompts_;
    size_t next_ = 0;
};

class DirectorClient {
public:
    DirectorClient(DirectorConfig config, std::shared_ptr<DirectorTransport> transport);

    const DirectorConfig& config() const { return config_; }
    // Sends the prompt with retries; returns the first reply that parses.
    // Throws DecompositionError with per-attempt diagnostics when none does.
    StoryBoard request(const std::string& instruction) const;

private:
    DirectorConfig config_;
    std::shared_ptr<DirectorTransport> transport_;
};

// LLM first (when a client is given), fallback grammar otherwise or on failure.
StoryBoard decompose(const std::string& instruction, const DirectorClient* client = nullptr,
                     const PhraseTable& table = PhraseTable::defaults());

}  // namespace mcam
