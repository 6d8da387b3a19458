#pragma once

#include <initializer_list>
#include <utility>

#include "mrtamp/world.hpp"

namespace fx {

using namespace mrtamp;

// World builder for hand-made test cases.
inline WorldSpec world(int cols, int rows, std::initializer_list<std::pair<int, int>> joints = {},
                       std::initializer_list<Cell> obstacles = {}) {
  WorldSpec w;
  w.map_cols = cols;
  w.map_rows = rows;
  int id = 0;
  for (auto [jc, jr] : joints) w.robots.push_back(robot_at_joint(w, id++, jc, jr));
  for (Cell c : obstacles) w.obstacles.push_back({c, w.tol.obstacle_radius, w.tol.obstacle_height});
  return w;
}

inline void add_box(WorldSpec& w, Cell from, Cell to) {
  w.boxes.push_back({static_cast<int>(w.boxes.size()), from, to});
}

// Robot with an arbitrary base, used where the grid-joint layout is not wanted.
inline void add_robot(WorldSpec& w, double x, double y) {
  RobotSpec r;
  r.id = static_cast<int>(w.robots.size());
  r.base_x = x;
  r.base_y = y;
  r.reach_radius = w.tol.reach_radius;
  const Cell c = cell_of(w, {x, y, 0}).value_or(Cell{0, 0});
  r.home_block = {c, c, c, c};
  r.arm_rest_z = w.tol.hover_z;
  w.robots.push_back(r);
}

}  // namespace fx
