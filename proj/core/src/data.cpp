// SPDX-License-Identifier: Apache-2.0
#include "maven/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "mat_file.hpp"

namespace maven {

namespace fs = std::filesystem;

void DatasetSplit::validate() const {
    if (labels.empty()) throw DataError("dataset: no items");
    if (images.rank() != 4 || images.dim(0) != labels.size()) {
        throw DataError("dataset: images " + shape_to_string(images.shape()) + " do not match " +
                        std::to_string(labels.size()) + " labels");
    }
    for (auto l : labels) {
        if (l >= class_names.size()) throw DataError("dataset: label " + std::to_string(l) + " out of range");
    }
    if (!images.all_finite()) throw DataError("dataset: non-finite pixel values");
}

std::uint8_t unit_to_pixel(double v) {
    const double p = std::round((std::clamp(v, -1.0, 1.0) + 1.0) * 127.5);
    return static_cast<std::uint8_t>(p);
}

// ---------------------------------------------------------------- image folder

namespace {

bool is_image_file(const fs::path& p) {
    std::string ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp";
}

void append_image(const cv::Mat& img, std::size_t channels, std::vector<double>& out) {
    for (int y = 0; y < img.rows; ++y) {
        const auto* row = img.ptr<std::uint8_t>(y);
        for (int x = 0; x < img.cols; ++x) {
            if (channels == 1) {
                out.push_back(pixel_to_unit(row[x]));
            } else {
                // OpenCV holds BGR; store RGB.
                out.push_back(pixel_to_unit(row[3 * x + 2]));
                out.push_back(pixel_to_unit(row[3 * x + 1]));
                out.push_back(pixel_to_unit(row[3 * x + 0]));
            }
        }
    }
}

}  // namespace

DatasetSplit load_image_folder(const fs::path& root, std::size_t image_size, std::size_t channels) {
    if (channels != 1 && channels != 3) throw DataError("image folder: channels must be 1 or 3");
    if (image_size == 0) throw DataError("image folder: image size must be positive");
    if (!fs::is_directory(root)) throw DataError("image folder: " + root.string() + " is not a directory");

    std::vector<fs::path> class_dirs;
    for (const auto& e : fs::directory_iterator(root)) {
        if (e.is_directory()) class_dirs.push_back(e.path());
    }
    std::sort(class_dirs.begin(), class_dirs.end());
    if (class_dirs.empty()) throw DataError("image folder: no class subdirectories under " + root.string());

    DatasetSplit out;
    out.split = root.filename().string();
    std::vector<double> pixels;
    const int side = static_cast<int>(image_size);
    for (std::size_t c = 0; c < class_dirs.size(); ++c) {
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(class_dirs[c])) {
            if (e.is_regular_file() && is_image_file(e.path())) files.push_back(e.path());
        }
        if (files.empty()) throw DataError("image folder: class directory " + class_dirs[c].string() + " is empty");
        std::sort(files.begin(), files.end());
        out.class_names.push_back(class_dirs[c].filename().string());
        for (const auto& f : files) {
            cv::Mat img = cv::imread(f.string(), channels == 1 ? cv::IMREAD_GRAYSCALE : cv::IMREAD_COLOR);
            if (img.empty()) throw DataError("image folder: cannot decode " + f.string());
            if (img.depth() != CV_8U) img.convertTo(img, CV_8U);
            if (img.rows != side || img.cols != side) {
                cv::Mat resized;
                cv::resize(img, resized, cv::Size(side, side), 0, 0, cv::INTER_AREA);
                img = resized;
            }
            append_image(img, channels, pixels);
            out.labels.push_back(c);
        }
    }
    out.images = Tensor(Shape{out.labels.size(), image_size, image_size, channels}, std::move(pixels));
    return out;
}

// ---------------------------------------------------------------- CIFAR-10 / SVHN

DatasetSplit load_cifar10(const fs::path& dir, const std::string& split) {
    std::vector<fs::path> files;
    if (split == "train") {
        for (int i = 1; i <= 5; ++i) files.push_back(dir / ("data_batch_" + std::to_string(i) + ".bin"));
    } else if (split == "test") {
        files.push_back(dir / "test_batch.bin");
    } else {
        throw DataError("cifar10: split must be 'train' or 'test'");
    }
    constexpr std::size_t kSide = 32, kPlane = kSide * kSide, kRecord = 1 + 3 * kPlane;
    DatasetSplit out;
    out.split = split;
    out.class_names = {"airplane", "automobile", "bird", "cat", "deer", "dog", "frog", "horse", "ship", "truck"};
    std::vector<double> pixels;
    for (const auto& f : files) {
        std::ifstream in(f, std::ios::binary);
        if (!in) throw DataError("cifar10: missing " + f.string());
        std::vector<unsigned char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        if (raw.size() % kRecord != 0) throw DataError("cifar10: truncated file " + f.string());
        for (std::size_t off = 0; off < raw.size(); off += kRecord) {
            const unsigned label = raw[off];
            if (label >= 10) throw DataError("cifar10: bad label in " + f.string());
            out.labels.push_back(label);
            for (std::size_t p = 0; p < kPlane; ++p) {
                for (std::size_t ch = 0; ch < 3; ++ch) pixels.push_back(pixel_to_unit(raw[off + 1 + ch * kPlane + p]));
            }
        }
    }
    out.images = Tensor(Shape{out.labels.size(), kSide, kSide, 3}, std::move(pixels));
    return out;
}

DatasetSplit load_svhn(const fs::path& dir, const std::string& split) {
    if (split != "train" && split != "test") throw DataError("svhn: split must be 'train' or 'test'");
    const fs::path file = dir / (split + "_32x32.mat");
    const auto vars = detail::read_mat_v5(file);
    const auto x = std::find_if(vars.begin(), vars.end(), [](const auto& v) { return v.name == "X"; });
    const auto y = std::find_if(vars.begin(), vars.end(), [](const auto& v) { return v.name == "y"; });
    if (x == vars.end() || y == vars.end()) throw DataError("svhn: " + file.string() + " lacks X or y");
    if (x->dims.size() != 4 || x->dims[0] != 32 || x->dims[1] != 32 || x->dims[2] != 3) {
        throw DataError("svhn: X must be 32x32x3xN");
    }
    const std::size_t n = x->dims[3];
    if (y->values.size() != n) throw DataError("svhn: label count does not match image count");

    DatasetSplit out;
    out.split = split;
    out.class_names = {"0", "1", "2", "3", "4", "5", "6", "7", "8", "9"};
    Tensor images(Shape{n, 32, 32, 3});
    // MATLAB arrays are column-major: X(h, w, c, n).
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t h = 0; h < 32; ++h) {
            for (std::size_t w = 0; w < 32; ++w) {
                for (std::size_t c = 0; c < 3; ++c) {
                    const double v = x->values[h + 32 * (w + 32 * (c + 3 * i))];
                    images[((i * 32 + h) * 32 + w) * 3 + c] = pixel_to_unit(static_cast<std::uint8_t>(v));
                }
            }
        }
        const auto label = static_cast<long>(std::lround(y->values[i]));
        if (label < 1 || label > 10) throw DataError("svhn: label out of range in " + file.string());
        out.labels.push_back(static_cast<std::size_t>(label % 10));
    }
    out.images = std::move(images);
    return out;
}

// ---------------------------------------------------------------- masking

std::vector<std::size_t> SemiSupervisedView::labeled_indices() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < labeled_mask.size(); ++i) {
        if (labeled_mask[i]) out.push_back(i);
    }
    return out;
}

std::vector<std::size_t> SemiSupervisedView::unlabeled_indices() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < labeled_mask.size(); ++i) {
        if (!labeled_mask[i]) out.push_back(i);
    }
    return out;
}

std::size_t SemiSupervisedView::labeled_count() const {
    return static_cast<std::size_t>(std::count(labeled_mask.begin(), labeled_mask.end(), true));
}

SemiSupervisedView mask_labels(std::shared_ptr<const DatasetSplit> split, double fraction, std::uint64_t seed) {
    if (!split) throw DataError("mask_labels: no dataset");
    if (!(fraction > 0.0 && fraction <= 1.0)) throw DataError("mask_labels: fraction must lie in (0, 1]");
    const std::size_t n = split->size();
    const std::size_t n_classes = split->n_classes();

    std::vector<std::vector<std::size_t>> members(n_classes);
    for (std::size_t i = 0; i < n; ++i) members[split->labels[i]].push_back(i);

    // Largest-remainder apportionment of the labeled total across classes.
    const auto total = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
    std::vector<std::size_t> quota(n_classes);
    std::vector<std::pair<double, std::size_t>> remainders;
    std::size_t assigned = 0;
    for (std::size_t c = 0; c < n_classes; ++c) {
        const double exact = fraction * static_cast<double>(members[c].size());
        quota[c] = static_cast<std::size_t>(std::floor(exact));
        assigned += quota[c];
        remainders.emplace_back(exact - std::floor(exact), c);
    }
    std::stable_sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t i = 0; assigned < total && i < remainders.size(); ++i) {
        const std::size_t c = remainders[i].second;
        if (quota[c] < members[c].size()) {
            ++quota[c];
            ++assigned;
        }
    }

    SemiSupervisedView view{split, std::vector<bool>(n, false), fraction, seed, {}};
    Rng rng(seed);
    for (std::size_t c = 0; c < n_classes; ++c) {
        if (members[c].empty()) continue;
        if (quota[c] == 0) {
            quota[c] = 1;
            view.warnings.push_back("class '" + split->class_names[c] + "' would receive no labeled items; using 1");
        }
        auto idx = members[c];
        std::shuffle(idx.begin(), idx.end(), rng.engine());
        for (std::size_t j = 0; j < quota[c]; ++j) view.labeled_mask[idx[j]] = true;
    }
    return view;
}

// ---------------------------------------------------------------- streams

ImageBatch make_batch(const DatasetSplit& data, std::span<const std::size_t> indices, const std::vector<bool>* mask) {
    ImageBatch b;
    b.images = data.images.gather_rows(indices);
    b.indices.assign(indices.begin(), indices.end());
    for (auto i : indices) {
        b.labels.push_back(data.labels[i]);
        b.labeled.push_back(mask ? static_cast<bool>((*mask)[i]) : true);
    }
    return b;
}

BatchStream::BatchStream(const SemiSupervisedView& view, std::size_t batch_size, StreamKind kind, std::uint64_t seed)
    : data_(view.data), mask_(view.labeled_mask), batch_size_(batch_size), kind_(kind), rng_(seed) {
    if (batch_size == 0) throw DataError("batch_stream: batch size must be >= 1");
    for (std::size_t i = 0; i < mask_.size(); ++i) {
        const bool take = kind == StreamKind::any || (kind == StreamKind::labeled) == static_cast<bool>(mask_[i]);
        if (take) pool_.push_back(i);
    }
    if (pool_.empty()) {
        throw DataError(kind == StreamKind::labeled ? "batch_stream: view has no labeled items"
                                                    : "batch_stream: no items available for this stream");
    }
    reshuffle();
}

std::size_t BatchStream::batches_per_epoch() const {
    return pool_.size() < batch_size_ ? 1 : pool_.size() / batch_size_;
}

void BatchStream::reshuffle() {
    order_ = pool_;
    std::shuffle(order_.begin(), order_.end(), rng_.engine());
    cursor_ = 0;
}

ImageBatch BatchStream::next() {
    const std::size_t take = std::min(batch_size_, pool_.size());
    if (cursor_ + take > order_.size() || cursor_ / take >= batches_per_epoch()) {
        ++epoch_;
        reshuffle();
    }
    std::span<const std::size_t> idx(order_.data() + cursor_, take);
    cursor_ += take;
    ImageBatch b = make_batch(*data_, idx, &mask_);
    if (kind_ == StreamKind::unlabeled) b.labels.assign(b.labels.size(), 0);
    return b;
}

// ---------------------------------------------------------------- synthetic data

std::vector<std::array<double, 2>> ring_centers(std::size_t modes, double radius) {
    std::vector<std::array<double, 2>> c(modes);
    for (std::size_t k = 0; k < modes; ++k) {
        const double a = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(modes);
        c[k] = {radius * std::cos(a), radius * std::sin(a)};
    }
    return c;
}

DatasetSplit make_toy_ring(std::size_t modes, std::size_t samples_per_mode, double radius, double sigma,
                           std::uint64_t seed) {
    if (modes < 2) throw DataError("toy ring: need at least 2 modes");
    const auto centers = ring_centers(modes, radius);
    Rng rng(seed);
    DatasetSplit out;
    out.split = "train";
    for (std::size_t k = 0; k < modes; ++k) out.class_names.push_back("mode" + std::to_string(k));
    const std::size_t n = modes * samples_per_mode;
    out.images = Tensor(Shape{n, 1, 1, 2});
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t k = i % modes;
        out.images[2 * i] = centers[k][0] + sigma * rng.normal();
        out.images[2 * i + 1] = centers[k][1] + sigma * rng.normal();
        out.labels.push_back(k);
    }
    return out;
}

namespace {

// 5 wide x 7 tall digit bitmaps, one string per row.
constexpr std::array<std::array<const char*, 7>, 10> kGlyphs{{
    {" ### ", "#   #", "#  ##", "# # #", "##  #", "#   #", " ### "},
    {"  #  ", " ##  ", "  #  ", "  #  ", "  #  ", "  #  ", " ### "},
    {" ### ", "#   #", "    #", "   # ", "  #  ", " #   ", "#####"},
    {"#####", "   # ", "  #  ", "   # ", "    #", "#   #", " ### "},
    {"   # ", "  ## ", " # # ", "#  # ", "#####", "   # ", "   # "},
    {"#####", "#    ", "#### ", "    #", "    #", "#   #", " ### "},
    {"  ## ", " #   ", "#    ", "#### ", "#   #", "#   #", " ### "},
    {"#####", "    #", "   # ", "  #  ", " #   ", " #   ", " #   "},
    {" ### ", "#   #", "#   #", " ### ", "#   #", "#   #", " ### "},
    {" ### ", "#   #", "#   #", " ####", "    #", "   # ", " ##  "},
}};

}  // namespace

DatasetSplit make_glyphs(std::size_t count, std::size_t side, double noise, std::uint64_t seed,
                         const std::string& split) {
    if (side < 16) throw DataError("glyphs: side must be >= 16");
    const std::size_t scale = side / 8;  // glyph cell size; 7 rows * scale fits inside side
    const std::size_t gw = 5 * scale, gh = 7 * scale;
    Rng rng(seed);
    DatasetSplit out;
    out.split = split;
    out.class_names = {"0", "1", "2", "3", "4", "5", "6", "7", "8", "9"};
    out.images = Tensor(Shape{count, side, side, 1}, -1.0);
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t label = i % 10;
        const std::size_t ox = rng.index(side - gw + 1);
        const std::size_t oy = rng.index(side - gh + 1);
        const double ink = 0.6 + 0.4 * rng.uniform();
        double* img = out.images.data() + i * side * side;
        for (std::size_t y = 0; y < gh; ++y) {
            for (std::size_t x = 0; x < gw; ++x) {
                if (kGlyphs[label][y / scale][x / scale] == '#') img[(oy + y) * side + ox + x] = -1.0 + 2.0 * ink;
            }
        }
        for (std::size_t p = 0; p < side * side; ++p) img[p] = std::clamp(img[p] + noise * rng.normal(), -1.0, 1.0);
        out.labels.push_back(label);
    }
    return out;
}

DatasetSplit scale_images(const DatasetSplit& split, double factor) {
    DatasetSplit out = split;
    out.images *= factor;
    return out;
}

std::vector<double> per_image_means(const Tensor& images) {
    std::vector<double> out(images.rows());
    for (std::size_t r = 0; r < images.rows(); ++r) {
        const auto row = images.row(r);
        out[r] = std::accumulate(row.begin(), row.end(), 0.0) / static_cast<double>(row.size());
    }
    return out;
}

std::vector<double> flattened_pixels(const Tensor& images) { return images.storage(); }

}  // namespace maven
