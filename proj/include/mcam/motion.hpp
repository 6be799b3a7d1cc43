#pragma once

// Camera motion patterns and the camera-to-content sign convention shared by
// the simulator, the flow classifier, training labels and evaluation.
//
//   PanLeft  -> content flows +x      PanRight -> content flows -x
//   TiltUp   -> content flows +y      TiltDown -> content flows -y
//   ZoomIn   -> positive divergence   ZoomOut  -> negative divergence
// (x points right, y points down.)

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace mcam {

enum class BasicMotion { ZoomIn, ZoomOut, PanLeft, PanRight, TiltUp, TiltDown };

inline constexpr std::array<BasicMotion, 6> kBasicMotions{BasicMotion::ZoomIn,  BasicMotion::ZoomOut,
                                                          BasicMotion::PanLeft, BasicMotion::PanRight,
                                                          BasicMotion::TiltUp,  BasicMotion::TiltDown};

std::string motion_name(BasicMotion m);
// Case-insensitive, internal whitespace ignored ("Zoom In" == "zoomin").
std::optional<BasicMotion> parse_basic_motion(std::string_view name);

struct ContentFlow {
    int dx = 0, dy = 0;   // translation direction of content
    int divergence = 0;   // +1 expanding, -1 contracting
};
ContentFlow content_flow(BasicMotion m);

// Static (no entries), a basic pattern (one entry), or a composite (>= 2 entries).
class MotionPattern {
public:
    using Entry = std::pair<BasicMotion, float>;

    MotionPattern() = default;  // Static
    MotionPattern(BasicMotion m) : entries_{{m, 1.0f}} {}  // NOLINT(google-explicit-constructor)
    static MotionPattern static_motion() { return {}; }
    static MotionPattern composite(std::vector<Entry> entries);

    bool is_static() const { return entries_.empty(); }
    bool is_basic() const { return entries_.size() == 1; }
    bool is_composite() const { return entries_.size() >= 2; }
    BasicMotion basic() const;
    const std::vector<Entry>& entries() const { return entries_; }
    bool contains(BasicMotion m) const;
    // Same basics regardless of order and weight.
    bool same_basics(const MotionPattern& other) const;

    // "Static", "ZoomIn", "ZoomIn+PanRight", "ZoomIn:0.5+PanRight".
    std::string name() const;
    // Inverse of name(); also accepts "Zoom In", "zoom in and pan right", "A, B". Throws ValidationError.
    static MotionPattern parse(std::string_view text);

    friend bool operator==(const MotionPattern& a, const MotionPattern& b) { return a.entries_ == b.entries_; }

private:
    std::vector<Entry> entries_;
};

std::vector<std::string> allowed_motion_names();

}  // namespace mcam
