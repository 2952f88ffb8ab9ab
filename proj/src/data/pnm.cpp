#include "hsp/data/pnm.hpp"

#include <cctype>
#include <fstream>
#include <iterator>
#include <string>

#include "hsp/errors.hpp"

namespace hsp::data {

namespace {

class HeaderReader {
public:
    HeaderReader(const std::vector<std::uint8_t>& bytes, const std::string& origin)
        : bytes_(bytes), origin_(origin) {}

    void skip_space_and_comments() {
        while (pos_ < bytes_.size()) {
            if (bytes_[pos_] == '#') {
                while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
            } else if (std::isspace(bytes_[pos_])) {
                ++pos_;
            } else {
                break;
            }
        }
    }

    std::size_t number() {
        skip_space_and_comments();
        std::size_t value = 0;
        std::size_t digits = 0;
        while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
            value = value * 10 + (bytes_[pos_] - '0');
            ++pos_;
            if (++digits > 9) fail("header value too large");
        }
        if (digits == 0) fail("malformed header");
        return value;
    }

    // Exactly one whitespace byte separates the header from the raster.
    std::size_t raster_start() {
        if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) fail("malformed header");
        return pos_ + 1;
    }

    std::size_t pos_ = 0;

    [[noreturn]] void fail(const std::string& why) const {
        throw DatasetError(origin_ + ": " + why);
    }

private:
    const std::vector<std::uint8_t>& bytes_;
    const std::string& origin_;
};

}  // namespace

Image8 decode_pnm(const std::vector<std::uint8_t>& bytes, const std::string& origin) {
    HeaderReader r(bytes, origin);
    if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
        r.fail("not a binary PGM/PPM file");
    }
    r.pos_ = 2;
    Image8 img;
    img.channels = bytes[1] == '5' ? 1 : 3;
    img.width = r.number();
    img.height = r.number();
    const std::size_t maxval = r.number();
    if (img.width == 0 || img.height == 0) r.fail("zero image extent");
    if (maxval == 0 || maxval > 255) r.fail("only 8-bit maxval is supported");
    const std::size_t start = r.raster_start();
    const std::size_t n = img.width * img.height * img.channels;
    if (bytes.size() < start + n) r.fail("truncated raster");
    img.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(start),
                      bytes.begin() + static_cast<std::ptrdiff_t>(start + n));
    return img;
}

Image8 read_pnm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return decode_pnm(bytes, path.string());
}

std::vector<std::uint8_t> encode_pnm(const Image8& image) {
    if (image.channels != 1 && image.channels != 3) {
        throw DatasetError("pnm: unsupported channel count " + std::to_string(image.channels));
    }
    if (image.pixels.size() != image.width * image.height * image.channels) {
        throw DatasetError("pnm: pixel buffer does not match extents");
    }
    const std::string header = std::string(image.channels == 1 ? "P5" : "P6") + "\n" +
                               std::to_string(image.width) + " " + std::to_string(image.height) +
                               "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.insert(out.end(), image.pixels.begin(), image.pixels.end());
    return out;
}

void write_pnm(const std::filesystem::path& path, const Image8& image) {
    const auto bytes = encode_pnm(image);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace hsp::data
