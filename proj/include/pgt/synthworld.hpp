#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace pgt::synthworld {

enum class Paradigm { rotation, oscillation, linear_travel, deform_rebound, ticking };
enum class Anomaly { none, stall, reverse, jitter, skip, drift };

std::string paradigm_name(Paradigm p);
std::string anomaly_name(Anomaly a);
Anomaly anomaly_from_name(const std::string& s);

inline constexpr Anomaly kAnomalies[] = {Anomaly::stall, Anomaly::reverse, Anomaly::jitter,
                                         Anomaly::skip, Anomaly::drift};

struct ParamRange {
    double lo = 0.0;
    double hi = 0.0;
};

struct CategorySpec {
    std::string name;
    std::string part;  // the dynamic subject
    Paradigm paradigm;
    std::map<std::string, ParamRange> param_ranges;
};

struct WorldConfig {
    int frames = 32;  // T
    int bins = 16;    // B
};

struct VideoSample {
    std::string id;
    std::string category;
    std::vector<int> frames;  // quantized states, each in [0, bins)
    int label = 0;            // 0 normal, 1 anomalous
    Anomaly anomaly = Anomaly::none;
    int onset = -1;  // t0; -1 when normal
    std::string explanation;
    uint64_t seed = 0;
};

// The fixed five-category world; one category per motion paradigm.
std::vector<CategorySpec> default_world();

const CategorySpec& find_category(const std::vector<CategorySpec>& world, const std::string& name);

// floor(s * bins), clamped to bins-1; s must lie in [0, 1).
int quantize(double s, int bins);

std::string render_explanation(const CategorySpec& cat, Anomaly anomaly);

// Closed-form base trajectories, exposed so tests can evaluate them directly.
struct Trajectory {
    Paradigm paradigm;
    double phase = 0.0;  // s0 / phase offset
    double rate = 0.0;   // omega / speed / tick interval
    double amp = 0.0;    // oscillation amplitude
    double period = 0.0; // oscillation / deform period
};

double base_value(const Trajectory& traj, double t);

VideoSample simulate_video(const CategorySpec& cat, Anomaly anomaly, uint64_t seed,
                           const WorldConfig& cfg = {});

// Balanced per-category set: even indices normal, odd indices cycle the
// anomaly taxonomy. Per-sample seeds derive from (base_seed, category, index).
std::vector<VideoSample> generate_dataset(const std::vector<CategorySpec>& world,
                                          int per_category, const std::string& id_prefix,
                                          uint64_t base_seed, const WorldConfig& cfg = {});

// JSONL manifest, byte-stable key order.
std::string manifest_line(const VideoSample& v);
VideoSample parse_manifest_line(const std::string& line);
std::string to_jsonl(const std::vector<VideoSample>& samples);
std::vector<VideoSample> from_jsonl(const std::string& text);

}  // namespace pgt::synthworld
