#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace cirgest {

enum class Category { digits, letters, shapes };

inline constexpr std::array<Category, 3> kCategories = {Category::shapes, Category::letters,
                                                        Category::digits};

std::string_view to_string(Category c);
Category parse_category(std::string_view name);

/// The five labels of a category, in canonical order.
const std::vector<std::string>& labels_of(Category c);

/// All fifteen labels: digits, letters, then shapes.
const std::vector<std::string>& all_labels();

std::optional<Category> category_of(std::string_view label);

/// Case-insensitive lookup returning the canonical spelling.
std::optional<std::string> canonical_label(std::string_view label);

}  // namespace cirgest
