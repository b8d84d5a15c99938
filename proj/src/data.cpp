#include "ddnn/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ddnn/errors.hpp"

namespace fs = std::filesystem;

namespace ddnn {

const std::array<std::string, kNumClasses>& class_names() {
    static const std::array<std::string, kNumClasses> names = {"car", "bus", "person"};
    return names;
}

ViewImage blank_view() {
    ViewImage v;
    v.fill(kBlankPixel);
    return v;
}

bool is_blank(const ViewImage& v) {
    return std::all_of(v.begin(), v.end(), [](uint8_t p) { return p == kBlankPixel; });
}

void validate_sample(const MultiViewSample& s) {
    if (s.global_label < 0 || s.global_label >= kNumClasses)
        throw ValidationError("sample " + s.id + ": global label out of range");
    int present = 0;
    for (int d = 0; d < kViewsPerSample; ++d) {
        const int l = s.device_labels[static_cast<size_t>(d)];
        if (l < -1 || l >= kNumClasses)
            throw ValidationError("sample " + s.id + ": device " + std::to_string(d) +
                                  " label " + std::to_string(l) + " outside {-1,0,1,2}");
        const bool blank = is_blank(s.views[static_cast<size_t>(d)]);
        if (l == -1) {
            if (!blank)
                throw ValidationError("sample " + s.id + ": device " + std::to_string(d) +
                                      " labeled absent but view is not the blank image");
        } else {
            ++present;
            if (blank)
                throw ValidationError("sample " + s.id + ": device " + std::to_string(d) +
                                      " labeled present but view is the blank image");
            if (l != s.global_label)
                throw ValidationError("sample " + s.id + ": device " + std::to_string(d) +
                                      " label " + std::to_string(l) +
                                      " disagrees with global label " +
                                      std::to_string(s.global_label));
        }
    }
    if (present == 0)
        throw ValidationError("sample " + s.id + ": object absent from every device");
}

// ---------------------------------------------------------------------------
// PPM io

namespace {

void write_ppm(const fs::path& path, const ViewImage& img) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ValidationError("cannot write view file " + path.string());
    f << "P6\n" << kImageSide << " " << kImageSide << "\n255\n";
    f.write(reinterpret_cast<const char*>(img.data()), img.size());
    if (!f) throw ValidationError("short write on view file " + path.string());
}

// Reads a whitespace-delimited PPM header token, skipping '#' comments.
std::string ppm_token(std::istream& in) {
    std::string tok;
    int c = in.get();
    while (c != EOF && (std::isspace(c) || c == '#')) {
        if (c == '#') {
            while (c != EOF && c != '\n') c = in.get();
        }
        c = in.get();
    }
    while (c != EOF && !std::isspace(c)) {
        tok.push_back(static_cast<char>(c));
        c = in.get();
    }
    if (c != EOF) in.unget();
    return tok;
}

ViewImage read_ppm(const fs::path& path, const std::string& sample_id) {
    std::ifstream f(path, std::ios::binary);
    if (!f)
        throw ValidationError("sample " + sample_id + ": missing view file " +
                              path.string());
    const std::string magic = ppm_token(f);
    if (magic != "P6")
        throw ValidationError("sample " + sample_id + ": " + path.string() +
                              " is not a binary PPM (magic '" + magic + "')");
    const std::string w = ppm_token(f), h = ppm_token(f), maxval = ppm_token(f);
    if (w != std::to_string(kImageSide) || h != std::to_string(kImageSide))
        throw ValidationError("sample " + sample_id + ": " + path.string() +
                              " has size " + w + "x" + h + ", expected 32x32");
    if (maxval != "255")
        throw ValidationError("sample " + sample_id + ": " + path.string() +
                              " maxval " + maxval + ", expected 255");
    f.get(); // single whitespace byte before the raster
    ViewImage img;
    f.read(reinterpret_cast<char*>(img.data()), img.size());
    if (f.gcount() != static_cast<std::streamsize>(img.size()))
        throw ValidationError("sample " + sample_id + ": " + path.string() +
                              " truncated pixel data");
    if (f.get() != EOF)
        throw ValidationError("sample " + sample_id + ": " + path.string() +
                              " has trailing bytes after the raster");
    return img;
}

} // namespace

// ---------------------------------------------------------------------------
// loader / writer

Dataset load_dataset(const std::string& directory) {
    const fs::path dir(directory);
    const fs::path index = dir / "index.txt";
    std::ifstream f(index);
    if (!f) throw ValidationError("cannot open dataset index " + index.string());

    Dataset ds;
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream is(line);
        MultiViewSample s;
        is >> s.id;
        for (auto& l : s.device_labels) is >> l;
        is >> s.global_label;
        std::string extra;
        if (!is || (is >> extra))
            throw ValidationError("index line " + std::to_string(lineno) +
                                  ": expected '<id> l0..l5 g'");
        for (int d = 0; d < kViewsPerSample; ++d)
            s.views[static_cast<size_t>(d)] =
                read_ppm(dir / (s.id + "_" + std::to_string(d) + ".ppm"), s.id);
        validate_sample(s);
        ds.samples.push_back(std::move(s));
    }
    return ds;
}

void write_dataset(const Dataset& ds, const std::string& directory) {
    const fs::path dir(directory);
    std::error_code ec;
    fs::create_directories(dir, ec);
    std::ofstream index(dir / "index.txt");
    if (!index) throw ValidationError("cannot write dataset index in " + directory);
    for (const auto& s : ds.samples) {
        index << s.id;
        for (int l : s.device_labels) index << " " << l;
        index << " " << s.global_label << "\n";
        for (int d = 0; d < kViewsPerSample; ++d)
            write_ppm(dir / (s.id + "_" + std::to_string(d) + ".ppm"),
                      s.views[static_cast<size_t>(d)]);
    }
    if (!index) throw ValidationError("short write on dataset index in " + directory);
}

// ---------------------------------------------------------------------------
// synthetic generator

std::vector<ViewTransform> default_view_transforms() {
    // Six cameras around the same scene: rotated viewpoints, slightly
    // different optics and sensor noise.
    std::vector<ViewTransform> t(kViewsPerSample);
    const float gains[kViewsPerSample][3] = {
        {1.05f, 0.90f, 0.95f}, {0.85f, 1.10f, 1.00f}, {1.00f, 1.00f, 0.80f},
        {0.95f, 0.85f, 1.10f}, {1.10f, 1.05f, 0.90f}, {0.90f, 0.95f, 1.05f},
    };
    const float noise_mul[kViewsPerSample] = {1.60f, 1.35f, 1.15f, 1.00f, 0.85f, 0.70f};
    for (int d = 0; d < kViewsPerSample; ++d) {
        t[d].rot_quarters = d % 4;
        t[d].dx = (d * 3) % 7 - 3;
        t[d].dy = (d * 5) % 7 - 3;
        for (int c = 0; c < 3; ++c) t[d].gain[c] = gains[d][c];
        t[d].brightness = (static_cast<float>(d) - 2.5f) * 6.0f;
        t[d].noise_mul = noise_mul[d];
    }
    return t;
}

namespace {

// Class base patterns: stripes/checker with a subtle dominant-channel tint.
// Class 0: red-tinted vertical stripes, 1: green-tinted horizontal stripes,
// 2: blue-tinted checker.
void base_color(int cls, int px, int py, uint8_t rgb[3]) {
    bool on = false;
    switch (cls) {
        case 0: on = ((px / 4) % 2) == 0; break;
        case 1: on = ((py / 4) % 2) == 0; break;
        default: on = ((px / 4 + py / 4) % 2) == 0; break;
    }
    const uint8_t hi = on ? 160 : 80;
    const uint8_t lo = on ? 90 : 50;
    rgb[0] = cls == 0 ? hi : lo;
    rgb[1] = cls == 1 ? hi : lo;
    rgb[2] = cls == 2 ? hi : lo;
}

int wrap32(int v) { return ((v % kImageSide) + kImageSide) % kImageSide; }

struct SceneJitter {
    float contrast = 1.0f;   // shared lighting, drawn once per sample
    float brightness = 0.0f;
};

ViewImage render_view(int cls, int phase_x, int phase_y, const SceneJitter& scene,
                      const ViewTransform& t, double noise_sigma, Rng& rng) {
    // Per-view clutter: another class pattern blended over the object. Its
    // opacity follows the noise knob, so noise_sigma = 0 stays separable.
    const int conf_cls = static_cast<int>(rng.index(kNumClasses));
    const int conf_px = static_cast<int>(rng.index(kImageSide));
    const int conf_py = static_cast<int>(rng.index(kImageSide));
    const float conf_opacity =
        static_cast<float>(std::min(1.0, noise_sigma * 2.0)) *
        rng.uniform(0.5f, 0.8f) * (0.8f + 0.2f * t.noise_mul);

    ViewImage img;
    for (int y = 0; y < kImageSide; ++y) {
        for (int x = 0; x < kImageSide; ++x) {
            // Viewpoint = quarter-turn rotation plus per-device phase shift.
            int sx = x, sy = y;
            switch (t.rot_quarters % 4) {
                case 1: sx = y; sy = kImageSide - 1 - x; break;
                case 2: sx = kImageSide - 1 - x; sy = kImageSide - 1 - y; break;
                case 3: sx = kImageSide - 1 - y; sy = x; break;
                default: break;
            }
            const int px = wrap32(sx + phase_x + t.dx);
            const int py = wrap32(sy + phase_y + t.dy);
            uint8_t rgb[3];
            base_color(cls, px, py, rgb);
            uint8_t conf_rgb[3];
            base_color(conf_cls, wrap32(sx + conf_px), wrap32(sy + conf_py), conf_rgb);
            for (int c = 0; c < 3; ++c) {
                const float mixed = (1.0f - conf_opacity) * static_cast<float>(rgb[c]) +
                                    conf_opacity * static_cast<float>(conf_rgb[c]);
                float v = mixed * t.gain[c] * scene.contrast + t.brightness +
                          scene.brightness;
                if (noise_sigma > 0.0)
                    v += rng.normal() *
                         static_cast<float>(noise_sigma * 255.0 * t.noise_mul);
                const long q = std::lround(v);
                img[(y * kImageSide + x) * 3 + c] =
                    static_cast<uint8_t>(std::clamp(q, 0L, 255L));
            }
        }
    }
    return img;
}

} // namespace

Dataset synth_generate(const SynthParams& params) {
    if (params.n_samples < 1) throw ValidationError("synth_generate: n_samples must be >= 1");
    for (double p : params.absence_prob)
        if (p < 0.0 || p >= 1.0)
            throw ValidationError("synth_generate: absence_prob must be in [0, 1)");
    std::vector<double> absence = params.absence_prob;
    if (absence.empty()) absence.assign(kViewsPerSample, 0.0);
    if (absence.size() == 1) absence.assign(kViewsPerSample, absence[0]);
    if (absence.size() != kViewsPerSample)
        throw ValidationError("synth_generate: absence_prob needs 1 or 6 entries");
    const auto transforms =
        params.view_shift.empty() ? default_view_transforms() : params.view_shift;
    if (transforms.size() != kViewsPerSample)
        throw ValidationError("synth_generate: view_shift needs 6 entries");

    Rng rng(Rng::derive(params.seed, "synth"));
    Dataset ds;
    ds.samples.reserve(static_cast<size_t>(params.n_samples));
    const ViewImage blank = blank_view();

    for (int i = 0; i < params.n_samples; ++i) {
        MultiViewSample s;
        char idbuf[16];
        std::snprintf(idbuf, sizeof idbuf, "s%06d", i);
        s.id = idbuf;
        s.global_label = static_cast<int>(rng.index(kNumClasses));
        const int phase_x = static_cast<int>(rng.index(8));
        const int phase_y = static_cast<int>(rng.index(8));
        SceneJitter scene;
        scene.contrast = rng.uniform(0.8f, 1.2f);
        scene.brightness = rng.uniform(-20.0f, 20.0f);

        for (int d = 0; d < kViewsPerSample; ++d) {
            if (rng.bernoulli(absence[static_cast<size_t>(d)])) {
                s.device_labels[static_cast<size_t>(d)] = -1;
                s.views[static_cast<size_t>(d)] = blank;
            } else {
                s.device_labels[static_cast<size_t>(d)] = s.global_label;
                s.views[static_cast<size_t>(d)] =
                    render_view(s.global_label, phase_x, phase_y, scene,
                                transforms[static_cast<size_t>(d)],
                                params.noise_sigma, rng);
            }
        }
        // Every sample must be visible somewhere; force one device if not.
        if (std::all_of(s.device_labels.begin(), s.device_labels.end(),
                        [](int l) { return l == -1; })) {
            const int d = static_cast<int>(rng.index(kViewsPerSample));
            s.device_labels[static_cast<size_t>(d)] = s.global_label;
            s.views[static_cast<size_t>(d)] =
                render_view(s.global_label, phase_x, phase_y, scene,
                            transforms[static_cast<size_t>(d)], params.noise_sigma, rng);
        }
        ds.samples.push_back(std::move(s));
    }
    return ds;
}

// ---------------------------------------------------------------------------
// split / statistics

std::pair<Dataset, Dataset> split(const Dataset& ds, double train_fraction,
                                  uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw ValidationError("split: train fraction must be in (0, 1)");
    const int64_t n = static_cast<int64_t>(ds.size());
    if (n < 2)
        throw ValidationError("split: dataset too small to give both splits >= 1 sample");
    int64_t n_train =
        std::llround(static_cast<double>(n) * train_fraction);
    n_train = std::clamp<int64_t>(n_train, 1, n - 1);

    std::vector<size_t> idx(static_cast<size_t>(n));
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    Rng rng(Rng::derive(seed, "split"));
    rng.shuffle(idx);

    Dataset train, test;
    train.split_tag = SplitTag::Train;
    test.split_tag = SplitTag::Test;
    for (int64_t i = 0; i < n; ++i) {
        const auto& s = ds.samples[idx[static_cast<size_t>(i)]];
        (i < n_train ? train : test).samples.push_back(s);
    }
    return {std::move(train), std::move(test)};
}

ClassDistribution class_distribution(const Dataset& ds) {
    ClassDistribution dist(kViewsPerSample, {0, 0, 0, 0});
    for (const auto& s : ds.samples)
        for (int d = 0; d < kViewsPerSample; ++d)
            ++dist[static_cast<size_t>(d)]
                  [static_cast<size_t>(s.device_labels[static_cast<size_t>(d)] + 1)];
    return dist;
}

std::string class_distribution_csv(const ClassDistribution& dist) {
    std::ostringstream os;
    os << "device,absent," << class_names()[0] << "," << class_names()[1] << ","
       << class_names()[2] << "\n";
    for (size_t d = 0; d < dist.size(); ++d) {
        os << d;
        for (auto c : dist[d]) os << "," << c;
        os << "\n";
    }
    return os.str();
}

std::string class_distribution_table(const ClassDistribution& dist) {
    std::ostringstream os;
    os << "device   absent      car      bus   person\n";
    for (size_t d = 0; d < dist.size(); ++d) {
        char buf[80];
        std::snprintf(buf, sizeof buf, "%6zu %8lld %8lld %8lld %8lld\n", d,
                      static_cast<long long>(dist[d][0]),
                      static_cast<long long>(dist[d][1]),
                      static_cast<long long>(dist[d][2]),
                      static_cast<long long>(dist[d][3]));
        os << buf;
    }
    return os.str();
}

} // namespace ddnn
