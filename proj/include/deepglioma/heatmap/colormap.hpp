#pragma once

#include <array>
#include <cstdint>

namespace deepglioma::heatmap {

using Rgb = std::array<std::uint8_t, 3>;

/// Probability colormap: index round(255 * p). Piecewise linear through
/// blue (0), cyan (85), yellow (170) and red (255).
inline constexpr std::array<Rgb, 256> kColormap{{
    {0, 0, 255}, {0, 3, 255}, {0, 6, 255}, {0, 9, 255}, {0, 12, 255}, {0, 15, 255},
    {0, 18, 255}, {0, 21, 255}, {0, 24, 255}, {0, 27, 255}, {0, 30, 255}, {0, 33, 255},
    {0, 36, 255}, {0, 39, 255}, {0, 42, 255}, {0, 45, 255}, {0, 48, 255}, {0, 51, 255},
    {0, 54, 255}, {0, 57, 255}, {0, 60, 255}, {0, 63, 255}, {0, 66, 255}, {0, 69, 255},
    {0, 72, 255}, {0, 75, 255}, {0, 78, 255}, {0, 81, 255}, {0, 84, 255}, {0, 87, 255},
    {0, 90, 255}, {0, 93, 255}, {0, 96, 255}, {0, 99, 255}, {0, 102, 255}, {0, 105, 255},
    {0, 108, 255}, {0, 111, 255}, {0, 114, 255}, {0, 117, 255}, {0, 120, 255}, {0, 123, 255},
    {0, 126, 255}, {0, 129, 255}, {0, 132, 255}, {0, 135, 255}, {0, 138, 255}, {0, 141, 255},
    {0, 144, 255}, {0, 147, 255}, {0, 150, 255}, {0, 153, 255}, {0, 156, 255}, {0, 159, 255},
    {0, 162, 255}, {0, 165, 255}, {0, 168, 255}, {0, 171, 255}, {0, 174, 255}, {0, 177, 255},
    {0, 180, 255}, {0, 183, 255}, {0, 186, 255}, {0, 189, 255}, {0, 192, 255}, {0, 195, 255},
    {0, 198, 255}, {0, 201, 255}, {0, 204, 255}, {0, 207, 255}, {0, 210, 255}, {0, 213, 255},
    {0, 216, 255}, {0, 219, 255}, {0, 222, 255}, {0, 225, 255}, {0, 228, 255}, {0, 231, 255},
    {0, 234, 255}, {0, 237, 255}, {0, 240, 255}, {0, 243, 255}, {0, 246, 255}, {0, 249, 255},
    {0, 252, 255}, {0, 255, 255}, {3, 255, 252}, {6, 255, 249}, {9, 255, 246}, {12, 255, 243},
    {15, 255, 240}, {18, 255, 237}, {21, 255, 234}, {24, 255, 231}, {27, 255, 228}, {30, 255, 225},
    {33, 255, 222}, {36, 255, 219}, {39, 255, 216}, {42, 255, 213}, {45, 255, 210}, {48, 255, 207},
    {51, 255, 204}, {54, 255, 201}, {57, 255, 198}, {60, 255, 195}, {63, 255, 192}, {66, 255, 189},
    {69, 255, 186}, {72, 255, 183}, {75, 255, 180}, {78, 255, 177}, {81, 255, 174}, {84, 255, 171},
    {87, 255, 168}, {90, 255, 165}, {93, 255, 162}, {96, 255, 159}, {99, 255, 156}, {102, 255, 153},
    {105, 255, 150}, {108, 255, 147}, {111, 255, 144}, {114, 255, 141}, {117, 255, 138}, {120, 255, 135},
    {123, 255, 132}, {126, 255, 129}, {129, 255, 126}, {132, 255, 123}, {135, 255, 120}, {138, 255, 117},
    {141, 255, 114}, {144, 255, 111}, {147, 255, 108}, {150, 255, 105}, {153, 255, 102}, {156, 255, 99},
    {159, 255, 96}, {162, 255, 93}, {165, 255, 90}, {168, 255, 87}, {171, 255, 84}, {174, 255, 81},
    {177, 255, 78}, {180, 255, 75}, {183, 255, 72}, {186, 255, 69}, {189, 255, 66}, {192, 255, 63},
    {195, 255, 60}, {198, 255, 57}, {201, 255, 54}, {204, 255, 51}, {207, 255, 48}, {210, 255, 45},
    {213, 255, 42}, {216, 255, 39}, {219, 255, 36}, {222, 255, 33}, {225, 255, 30}, {228, 255, 27},
    {231, 255, 24}, {234, 255, 21}, {237, 255, 18}, {240, 255, 15}, {243, 255, 12}, {246, 255, 9},
    {249, 255, 6}, {252, 255, 3}, {255, 255, 0}, {255, 252, 0}, {255, 249, 0}, {255, 246, 0},
    {255, 243, 0}, {255, 240, 0}, {255, 237, 0}, {255, 234, 0}, {255, 231, 0}, {255, 228, 0},
    {255, 225, 0}, {255, 222, 0}, {255, 219, 0}, {255, 216, 0}, {255, 213, 0}, {255, 210, 0},
    {255, 207, 0}, {255, 204, 0}, {255, 201, 0}, {255, 198, 0}, {255, 195, 0}, {255, 192, 0},
    {255, 189, 0}, {255, 186, 0}, {255, 183, 0}, {255, 180, 0}, {255, 177, 0}, {255, 174, 0},
    {255, 171, 0}, {255, 168, 0}, {255, 165, 0}, {255, 162, 0}, {255, 159, 0}, {255, 156, 0},
    {255, 153, 0}, {255, 150, 0}, {255, 147, 0}, {255, 144, 0}, {255, 141, 0}, {255, 138, 0},
    {255, 135, 0}, {255, 132, 0}, {255, 129, 0}, {255, 126, 0}, {255, 123, 0}, {255, 120, 0},
    {255, 117, 0}, {255, 114, 0}, {255, 111, 0}, {255, 108, 0}, {255, 105, 0}, {255, 102, 0},
    {255, 99, 0}, {255, 96, 0}, {255, 93, 0}, {255, 90, 0}, {255, 87, 0}, {255, 84, 0},
    {255, 81, 0}, {255, 78, 0}, {255, 75, 0}, {255, 72, 0}, {255, 69, 0}, {255, 66, 0},
    {255, 63, 0}, {255, 60, 0}, {255, 57, 0}, {255, 54, 0}, {255, 51, 0}, {255, 48, 0},
    {255, 45, 0}, {255, 42, 0}, {255, 39, 0}, {255, 36, 0}, {255, 33, 0}, {255, 30, 0},
    {255, 27, 0}, {255, 24, 0}, {255, 21, 0}, {255, 18, 0}, {255, 15, 0}, {255, 12, 0},
    {255, 9, 0}, {255, 6, 0}, {255, 3, 0}, {255, 0, 0},
}};

}  // namespace deepglioma::heatmap
