#pragma once

#include <array>
#include <string>
#include <string_view>

namespace memtax {

enum class Category { recitation = 0, reconstruction = 1, recollection = 2 };

inline constexpr std::array<Category, 3> kCategories = {
    Category::recitation, Category::reconstruction, Category::recollection};

std::string to_string(Category c);
Category parse_category(std::string_view name);

}  // namespace memtax
