#include "hml/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "hml/error.hpp"
#include "hml/util.hpp"

namespace hml {

namespace {

// Reads the next whitespace-delimited token, skipping '#' comment lines.
std::string next_pnm_token(std::istream& in) {
    std::string tok;
    int ch;
    while ((ch = in.get()) != EOF) {
        if (ch == '#') {
            while ((ch = in.get()) != EOF && ch != '\n') {}
            continue;
        }
        if (std::isspace(ch)) continue;
        tok.push_back(static_cast<char>(ch));
        while ((ch = in.get()) != EOF && !std::isspace(ch) && ch != '#') {
            tok.push_back(static_cast<char>(ch));
        }
        if (ch == '#') in.unget();
        break;
    }
    return tok;
}

} // namespace

ImageMatrix load_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::IoFailure, "cannot open image: " + path);

    if (next_pnm_token(in) != "P5")
        fail(ErrorCode::MalformedRecord, path + ": not a binary PGM (P5) file");
    bool okw = false, okh = false, okm = false;
    const int width = static_cast<int>(parse_long(next_pnm_token(in), &okw));
    const int height = static_cast<int>(parse_long(next_pnm_token(in), &okh));
    const long maxval = parse_long(next_pnm_token(in), &okm);
    if (!okw || !okh || !okm || width < 1 || height < 1)
        fail(ErrorCode::MalformedRecord, path + ": bad PGM header");
    if (maxval != 255)
        fail(ErrorCode::MalformedRecord, path + ": only maxval 255 is supported");

    ImageMatrix img(height, width);
    in.read(reinterpret_cast<char*>(img.pixels.data()),
            static_cast<std::streamsize>(img.pixels.size()));
    if (in.gcount() != static_cast<std::streamsize>(img.pixels.size()))
        fail(ErrorCode::MalformedRecord, path + ": truncated pixel data");
    return img;
}

void save_pgm(const ImageMatrix& image, const std::string& path) {
    std::ostringstream out;
    out << "P5\n" << image.width << " " << image.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(image.pixels.data()),
              static_cast<std::streamsize>(image.pixels.size()));
    write_file_atomic(path, out.str());
}

ImageMatrix resize_nn(const ImageMatrix& image, int new_height, int new_width) {
    if (new_height < 1 || new_width < 1)
        fail(ErrorCode::DimensionMismatch, "resize target must be positive");
    ImageMatrix out(new_height, new_width);
    const double sr = static_cast<double>(image.height) / new_height;
    const double sc = static_cast<double>(image.width) / new_width;
    for (int r = 0; r < new_height; ++r) {
        const int src_r = std::min(image.height - 1, static_cast<int>((r + 0.5) * sr));
        for (int c = 0; c < new_width; ++c) {
            const int src_c = std::min(image.width - 1, static_cast<int>((c + 0.5) * sc));
            out.at(r, c) = image.at(src_r, src_c);
        }
    }
    return out;
}

ImageMatrix rotate_nn(const ImageMatrix& image, double degrees) {
    const double rad = degrees * 3.14159265358979323846 / 180.0;
    const double cs = std::cos(rad);
    const double sn = std::sin(rad);
    const double cy = (image.height - 1) / 2.0;
    const double cx = (image.width - 1) / 2.0;
    ImageMatrix out(image.height, image.width);
    for (int r = 0; r < image.height; ++r) {
        for (int c = 0; c < image.width; ++c) {
            // inverse map: rotate destination coordinates back into the source
            const double dy = r - cy;
            const double dx = c - cx;
            const double sy = cy + dy * cs + dx * sn;
            const double sx = cx - dy * sn + dx * cs;
            int src_r = static_cast<int>(std::lround(sy));
            int src_c = static_cast<int>(std::lround(sx));
            src_r = std::clamp(src_r, 0, image.height - 1);
            src_c = std::clamp(src_c, 0, image.width - 1);
            out.at(r, c) = image.at(src_r, src_c);
        }
    }
    return out;
}

ImageMatrix crop(const ImageMatrix& image, const PatchRect& rect) {
    if (rect.top < 0 || rect.left < 0 || rect.bottom() > image.height ||
        rect.right() > image.width)
        fail(ErrorCode::OutOfBoundsRect, "crop rectangle leaves the image");
    ImageMatrix out(rect.height, rect.width);
    for (int r = 0; r < rect.height; ++r)
        for (int c = 0; c < rect.width; ++c) out.at(r, c) = image.at(rect.top + r, rect.left + c);
    return out;
}

void paste(ImageMatrix& dst, const ImageMatrix& src, int top, int left) {
    if (top < 0 || left < 0 || top + src.height > dst.height || left + src.width > dst.width)
        fail(ErrorCode::OutOfBoundsRect, "paste rectangle leaves the image");
    for (int r = 0; r < src.height; ++r)
        for (int c = 0; c < src.width; ++c) dst.at(top + r, left + c) = src.at(r, c);
}

} // namespace hml
