#pragma once

#include <numbers>
#include <optional>
#include <string>
#include <string_view>

namespace flava {

inline constexpr double kPi = std::numbers::pi;

/// Object classes of the KITTI tracking label schema.
enum class Category { Car, Van, Truck, Pedestrian, Cyclist, Tram, Misc, PersonSitting };

inline constexpr Category kAllCategories[] = {
    Category::Car,     Category::Van,  Category::Truck, Category::Pedestrian,
    Category::Cyclist, Category::Tram, Category::Misc,  Category::PersonSitting};

/// KITTI spelling, e.g. "Person_sitting".
std::string_view to_string(Category c) noexcept;
std::optional<Category> parse_category(std::string_view name) noexcept;

/// Wraps an angle into [-pi, pi).
double normalize_angle(double radians) noexcept;

}  // namespace flava
