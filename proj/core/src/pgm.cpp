#include "seda/pgm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace seda {

Tensor<float> tile_grid(const std::vector<Tensor<float>>& images, int cols) {
    if (images.empty()) throw ShapeError("tile_grid: no images");
    const int h = images[0].dim(0), w = images[0].dim(1), c = images[0].dim(2);
    for (const auto& im : images)
        if (im.shape() != images[0].shape())
            throw ShapeError("tile_grid: images must share one shape");
    const int rows = (static_cast<int>(images.size()) + cols - 1) / cols;
    Tensor<float> grid({rows * h, cols * w, c});
    for (std::size_t k = 0; k < images.size(); ++k) {
        const int r = static_cast<int>(k) / cols;
        const int col = static_cast<int>(k) % cols;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                for (int ci = 0; ci < c; ++ci)
                    grid[((static_cast<std::size_t>(r * h + y)) * (cols * w) + (col * w + x)) * c + ci] =
                        images[k][(static_cast<std::size_t>(y) * w + x) * c + ci];
    }
    return grid;
}

void write_pgm(const std::string& path, const Tensor<float>& image) {
    if (image.rank() != 3) throw ShapeError("write_pgm expects an H x W x C image");
    const int h = image.dim(0), w = image.dim(1), c = image.dim(2);
    std::vector<float> grey(static_cast<std::size_t>(h) * w, 0.0f);
    for (std::size_t p = 0; p < grey.size(); ++p) {
        float acc = 0.0f;
        for (int ci = 0; ci < c; ++ci) acc += image[p * c + ci];
        grey[p] = acc / static_cast<float>(c);
    }
    const auto [mn_it, mx_it] = std::minmax_element(grey.begin(), grey.end());
    const float mn = *mn_it;
    const float range = std::max(*mx_it - mn, 1e-12f);

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot create " + path);
    f << "P5\n" << w << " " << h << "\n255\n";
    for (float v : grey) {
        const int q = static_cast<int>(std::lround((v - mn) / range * 255.0f));
        const auto b = static_cast<unsigned char>(std::clamp(q, 0, 255));
        f.write(reinterpret_cast<const char*>(&b), 1);
    }
    if (!f) throw IoError("failed writing " + path);
}

} // namespace seda
