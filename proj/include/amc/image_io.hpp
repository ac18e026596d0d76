#ifndef AMC_IMAGE_IO_HPP
#define AMC_IMAGE_IO_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "amc/error.hpp"

namespace amc {

// Interleaved 8-bit RGB, row major. The working currency of the data layer;
// conversion to planar [0,1] tensors happens only when an episode needs it.
struct Image {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> rgb;  // width*height*3 bytes, R G B per pixel

    std::uint8_t at(int y, int x, int ch) const {
        return rgb[(static_cast<std::size_t>(y) * width + x) * 3 + static_cast<std::size_t>(ch)];
    }
};

namespace detail {

// One PPM header token, skipping whitespace and # comments.
inline std::string ppm_token(std::istream& in, const std::string& path) {
    std::string tok;
    int c = in.get();
    while (c != EOF) {
        if (c == '#') {
            while (c != EOF && c != '\n') c = in.get();
        } else if (std::isspace(c)) {
            c = in.get();
        } else {
            break;
        }
    }
    while (c != EOF && !std::isspace(c)) {
        tok.push_back(static_cast<char>(c));
        c = in.get();
    }
    if (tok.empty()) throw DataError("truncated PPM header in '" + path + "'");
    return tok;
}

inline int ppm_int(std::istream& in, const std::string& path) {
    const std::string tok = ppm_token(in, path);
    try {
        return std::stoi(tok);
    } catch (const std::exception&) {
        throw DataError("bad PPM header field '" + tok + "' in '" + path + "'");
    }
}

inline bool ends_with_ppm(const std::string& path) {
    if (path.size() < 4) return false;
    std::string ext = path.substr(path.size() - 4);
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext == ".ppm";
}

}  // namespace detail

inline Image read_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open image '" + path + "'");
    if (detail::ppm_token(in, path) != "P6") throw DataError("'" + path + "' is not a binary P6 PPM");
    Image img;
    img.width = detail::ppm_int(in, path);
    img.height = detail::ppm_int(in, path);
    const int maxval = detail::ppm_int(in, path);
    if (img.width <= 0 || img.height <= 0) throw DataError("bad PPM dimensions in '" + path + "'");
    if (maxval != 255) throw DataError("unsupported PPM maxval " + std::to_string(maxval) + " in '" + path + "'");
    // The header ends with exactly one whitespace byte before the raster.
    img.rgb.resize(static_cast<std::size_t>(img.width) * img.height * 3);
    in.read(reinterpret_cast<char*>(img.rgb.data()), static_cast<std::streamsize>(img.rgb.size()));
    if (in.gcount() != static_cast<std::streamsize>(img.rgb.size()))
        throw DataError("truncated PPM raster in '" + path + "'");
    return img;
}

inline void write_ppm(const std::string& path, const Image& img) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write image '" + path + "'");
    out << "P6\n" << img.width << " " << img.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.rgb.data()), static_cast<std::streamsize>(img.rgb.size()));
    if (!out) throw DataError("failed writing image '" + path + "'");
}

// Decode any supported raster file to 8-bit RGB. PPM is handled natively;
// everything else goes through OpenCV. Non-3-channel sources are rejected
// rather than silently converted, per the data contract.
inline Image decode_image(const std::string& path) {
    if (detail::ends_with_ppm(path)) return read_ppm(path);
    cv::Mat m = cv::imread(path, cv::IMREAD_UNCHANGED);
    if (m.empty()) throw DataError("cannot decode image '" + path + "'");
    if (m.channels() != 3) throw DataError("'" + path + "' has " + std::to_string(m.channels()) + " channels, expected 3-channel RGB");
    if (m.depth() != CV_8U) throw DataError("'" + path + "' is not 8-bit");
    Image img;
    img.width = m.cols;
    img.height = m.rows;
    img.rgb.resize(static_cast<std::size_t>(img.width) * img.height * 3);
    for (int y = 0; y < img.height; ++y) {
        const auto* row = m.ptr<cv::Vec3b>(y);
        for (int x = 0; x < img.width; ++x) {
            const std::size_t o = (static_cast<std::size_t>(y) * img.width + x) * 3;
            img.rgb[o + 0] = row[x][2];  // OpenCV loads BGR
            img.rgb[o + 1] = row[x][1];
            img.rgb[o + 2] = row[x][0];
        }
    }
    return img;
}

// Bilinear resample with half-pixel-centered sampling, clamped at borders.
// Constant images map to themselves exactly, which the resize oracle checks.
inline Image resize_bilinear(const Image& src, int out_w, int out_h) {
    if (out_w <= 0 || out_h <= 0) throw GeometryError("resize target must be positive");
    if (src.width == out_w && src.height == out_h) return src;
    Image dst;
    dst.width = out_w;
    dst.height = out_h;
    dst.rgb.resize(static_cast<std::size_t>(out_w) * out_h * 3);
    const double sx = static_cast<double>(src.width) / out_w;
    const double sy = static_cast<double>(src.height) / out_h;
    for (int y = 0; y < out_h; ++y) {
        const double fy = (y + 0.5) * sy - 0.5;
        int y0 = static_cast<int>(std::floor(fy));
        const double wy = fy - y0;
        int y1 = std::min(y0 + 1, src.height - 1);
        y0 = std::max(y0, 0);
        for (int x = 0; x < out_w; ++x) {
            const double fx = (x + 0.5) * sx - 0.5;
            int x0 = static_cast<int>(std::floor(fx));
            const double wx = fx - x0;
            int x1 = std::min(x0 + 1, src.width - 1);
            x0 = std::max(x0, 0);
            for (int ch = 0; ch < 3; ++ch) {
                const double top = (1.0 - wx) * src.at(y0, x0, ch) + wx * src.at(y0, x1, ch);
                const double bot = (1.0 - wx) * src.at(y1, x0, ch) + wx * src.at(y1, x1, ch);
                const double v = (1.0 - wy) * top + wy * bot;
                dst.rgb[(static_cast<std::size_t>(y) * out_w + x) * 3 + static_cast<std::size_t>(ch)] =
                    static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
            }
        }
    }
    return dst;
}

// Planar [3,H,W] buffer scaled to [0,1], the layout the backbone consumes.
template <typename S>
std::vector<S> planar_unit(const Image& img) {
    const std::size_t hw = static_cast<std::size_t>(img.width) * img.height;
    std::vector<S> out(hw * 3);
    for (int ch = 0; ch < 3; ++ch)
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x)
                out[ch * hw + static_cast<std::size_t>(y) * img.width + x] =
                    static_cast<S>(img.at(y, x, ch) / 255.0);
    return out;
}

}  // namespace amc

#endif
