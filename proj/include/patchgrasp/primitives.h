#pragma once

#include "patchgrasp/mesh.h"

namespace patchgrasp {

// Procedural meshes used by tests, demos and the synthetic benchmark scenes.

enum class GridDiagonal { Uniform, Alternating };

// nx * ny vertices in the z = 0 plane, vertex (i, j) has id j * nx + i and
// position origin + spacing * (i, j, 0). Faces are counterclockwise seen from +z.
TriangleMesh makeGrid(int nx, int ny, double spacing, const Vector3& origin = Vector3::Zero(),
                      GridDiagonal diagonal = GridDiagonal::Alternating);

// Loop-style subdivision of the icosahedron projected to the sphere:
// V = 10 * 4^k + 2 vertices, F = 20 * 4^k faces.
TriangleMesh makeIcosphere(int subdivisions, double radius = 1.0);

// Closed axis-aligned box surface with outward normals. Each side is gridded
// with cells of (approximately) the given spacing.
TriangleMesh makeBox(const Vector3& lo, const Vector3& hi, double spacing);

// Two rows of n vertices each, spacing apart, forming a triangle strip.
TriangleMesh makeStrip(int n, double spacing);

// Closed cylinder along +z from z0 to z1 with capped ends.
TriangleMesh makeCylinder(double radius, double z0, double z1, int segments, int rings);

} // namespace patchgrasp
