#include "difflens/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>

#include "difflens/system.hpp"

namespace difflens {

namespace {

void write_or_throw(std::ofstream& out, const std::string& path) {
    if (!out) throw Error("cannot write " + path);
}

int next_token(std::istream& in) {
    // skips PNM comments
    for (;;) {
        int c = in.peek();
        if (c == '#') {
            std::string line;
            std::getline(in, line);
        } else if (std::isspace(c)) {
            in.get();
        } else {
            break;
        }
    }
    int v = 0;
    in >> v;
    return v;
}

} // namespace

void save_ppm(const SceneImage& image, const std::string& path, int bits) {
    if (bits != 8 && bits != 16) throw Error("ppm depth must be 8 or 16 bits");
    std::ofstream out(path, std::ios::binary);
    write_or_throw(out, path);
    int maxval = bits == 8 ? 255 : 65535;
    out << "P6\n" << image.width << " " << image.height << "\n" << maxval << "\n";
    for (int y = 0; y < image.height; ++y)
        for (int x = 0; x < image.width; ++x)
            for (int c = 0; c < 3; ++c) {
                double v = std::clamp(image.at(x, y, c), 0.0, 1.0);
                unsigned q = static_cast<unsigned>(std::lround(v * maxval));
                if (bits == 16) out.put(static_cast<char>((q >> 8) & 0xff));
                out.put(static_cast<char>(q & 0xff));
            }
    write_or_throw(out, path);
}

SceneImage load_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read " + path);
    std::string magic;
    in >> magic;
    if (magic != "P6") throw Error(path + ": expected binary P6 pixmap");
    SceneImage img;
    img.width = next_token(in);
    img.height = next_token(in);
    int maxval = next_token(in);
    if (maxval != 255 && maxval != 65535) throw Error(path + ": unsupported maxval");
    in.get(); // single whitespace after the header
    img.data.resize(static_cast<std::size_t>(img.width) * img.height * 3);
    for (double& v : img.data) {
        int q;
        if (maxval == 255) {
            q = in.get();
        } else {
            int hi = in.get();
            q = (hi << 8) | in.get();
        }
        v = static_cast<double>(q) / maxval;
    }
    if (!in) throw Error(path + ": truncated pixel data");
    return img;
}

void save_pgm16(const std::vector<double>& values, int width, int height,
                const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    write_or_throw(out, path);
    double peak = 0.0;
    for (double v : values) peak = std::max(peak, v);
    double scale = peak > 0.0 ? 65535.0 / peak : 0.0;
    out << "P5\n" << width << " " << height << "\n65535\n";
    for (double v : values) {
        unsigned q = static_cast<unsigned>(std::lround(std::max(v, 0.0) * scale));
        q = std::min(q, 65535u);
        out.put(static_cast<char>((q >> 8) & 0xff));
        out.put(static_cast<char>(q & 0xff));
    }
    write_or_throw(out, path);
}

void save_csv_grid(const std::vector<double>& values, int width, int height,
                   const std::string& path) {
    std::ofstream out(path);
    write_or_throw(out, path);
    out.precision(17);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            if (x) out << ",";
            out << values[static_cast<std::size_t>(y) * width + x];
        }
        out << "\n";
    }
    write_or_throw(out, path);
}

void save_raw_f32(const std::vector<double>& values, int width, int height, int channels,
                  const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    write_or_throw(out, path);
    for (double v : values) {
        float f = static_cast<float>(v);
        out.write(reinterpret_cast<const char*>(&f), sizeof(f));
    }
    write_or_throw(out, path);
    std::ofstream dims(path + ".dims");
    dims << width << " " << height << " " << channels << "\n";
    write_or_throw(dims, path + ".dims");
}

std::vector<float> load_raw_f32(const std::string& path, int* width, int* height, int* channels) {
    std::ifstream dims(path + ".dims");
    if (!dims) throw Error("cannot read " + path + ".dims");
    dims >> *width >> *height >> *channels;
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read " + path);
    std::vector<float> out(static_cast<std::size_t>(*width) * *height * *channels);
    in.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(out.size() * sizeof(float)));
    if (!in) throw Error(path + ": truncated float data");
    return out;
}

} // namespace difflens
