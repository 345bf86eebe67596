#pragma once

#include <filesystem>

#include "opl/image.hpp"

namespace opl {

// Binary netpbm I/O. Images are P6 (or P5, replicated to RGB on load);
// label maps are P5 with pixel value = class index and a "# classes=C"
// comment line carrying the class count.

ImageTensor load_image(const std::filesystem::path& path);
void save_image(const ImageTensor& img, const std::filesystem::path& path);

LabelMap load_label(const std::filesystem::path& path);
void save_label(const LabelMap& lbl, const std::filesystem::path& path);

}  // namespace opl
