#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "ddnn/rng.hpp"

namespace ddnn {

inline constexpr int kViewsPerSample = 6;
inline constexpr int kImageSide = 32;
inline constexpr int kImageBytes = kImageSide * kImageSide * 3; // RGB
inline constexpr int kNumClasses = 3;
inline constexpr uint8_t kBlankPixel = 128; // the all-grey "object absent" view

using ViewImage = std::array<uint8_t, kImageBytes>;

/**
 * One classification instance: six per-device 32x32 RGB views, per-device
 * presence labels and one global class label.
 *
 * Invariants: device label -1 iff the view is the blank image; at least one
 * device sees the object; every non-(-1) device label equals the global label.
 */
struct MultiViewSample {
    std::string id;
    std::array<ViewImage, kViewsPerSample> views;
    std::array<int, kViewsPerSample> device_labels; // in {-1, 0, 1, 2}
    int global_label = 0;                           // in {0, 1, 2}
};

enum class SplitTag { Full, Train, Test };

struct Dataset {
    std::vector<MultiViewSample> samples;
    SplitTag split_tag = SplitTag::Full;

    size_t size() const { return samples.size(); }
};

/// Class index -> name. 0=car, 1=bus, 2=person.
const std::array<std::string, kNumClasses>& class_names();

ViewImage blank_view();
bool is_blank(const ViewImage& v);

/// Throws ValidationError (message includes the sample id) on any invariant
/// violation.
void validate_sample(const MultiViewSample& s);

// --- on-disk format ---------------------------------------------------------
// A dataset directory contains:
//   index.txt                one line per sample: "<id> l0 l1 l2 l3 l4 l5 g"
//   <id>_<device>.ppm        binary PPM (P6), 32x32, maxval 255, one per view
// Index order defines dataset order. The writer emits exactly this layout and
// the loader accepts exactly it; a write/load cycle is the identity on pixels
// and labels.

Dataset load_dataset(const std::string& directory);
void write_dataset(const Dataset& ds, const std::string& directory);

// --- synthetic generator ----------------------------------------------------

/// Fixed per-device view transform: how device d sees the shared scene.
struct ViewTransform {
    int rot_quarters = 0;  // 90-degree rotations of the pattern
    int dx = 0, dy = 0;    // extra pattern phase shift
    float gain[3] = {1.0f, 1.0f, 1.0f}; // per-channel gain
    float brightness = 0.0f;            // additive, in pixel units
    float noise_mul = 1.0f;             // device noise scale factor
};

struct SynthParams {
    uint64_t seed = 7;
    int n_samples = 851;
    /// Per-device probability that the object is absent (-1 label).
    std::vector<double> absence_prob = {0.50, 0.42, 0.35, 0.28, 0.22, 0.18};
    /// Pixel noise scale in [0,1] units (scaled by 255 and the per-device
    /// noise multiplier before being applied).
    double noise_sigma = 0.35;
    /// Per-device transforms; default built by default_view_transforms().
    std::vector<ViewTransform> view_shift = {};
};

std::vector<ViewTransform> default_view_transforms();

/// Deterministic synthetic multi-view dataset. Each class renders a distinct
/// color/orientation pattern; the same scene (class + random phase) is seen
/// through each device's fixed transform; absent views become the blank image.
Dataset synth_generate(const SynthParams& params);

// --- utilities ---------------------------------------------------------------

/// Deterministic disjoint+exhaustive split. Default fraction 680/851.
std::pair<Dataset, Dataset> split(const Dataset& ds, double train_fraction,
                                  uint64_t seed);

inline constexpr double kDefaultTrainFraction = 680.0 / 851.0;

/// Per-device counts over labels {-1, 0, 1, 2}; [device][0] counts -1.
using ClassDistribution = std::vector<std::array<int64_t, kNumClasses + 1>>;
ClassDistribution class_distribution(const Dataset& ds);

std::string class_distribution_csv(const ClassDistribution& dist);
std::string class_distribution_table(const ClassDistribution& dist);

} // namespace ddnn
