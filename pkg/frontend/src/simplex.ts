// Preference-vector helpers: slider values in, simplex points out.

export function projectToSimplex(raw: number[]): number[] {
  const clamped = raw.map((v) => (v > 0 ? v : 0));
  const sum = clamped.reduce((a, b) => a + b, 0);
  if (sum <= 0) {
    return clamped.map(() => 1 / clamped.length);
  }
  return clamped.map((v) => v / sum);
}

// Single slider for two objectives: position 0 means full weight on the
// first reward, position 1 full weight on the second.
export function sliderToOmega(position: number): [number, number] {
  const p = Math.min(1, Math.max(0, position));
  return [1 - p, p];
}

export interface TrianglePoint {
  x: number;
  y: number;
}

// Barycentric picker for three objectives: vertices in canvas coordinates.
export function barycentricWeights(
  p: TrianglePoint,
  a: TrianglePoint,
  b: TrianglePoint,
  c: TrianglePoint
): number[] | null {
  const det = (b.y - c.y) * (a.x - c.x) + (c.x - b.x) * (a.y - c.y);
  if (det === 0) return null;
  const w0 = ((b.y - c.y) * (p.x - c.x) + (c.x - b.x) * (p.y - c.y)) / det;
  const w1 = ((c.y - a.y) * (p.x - c.x) + (a.x - c.x) * (p.y - c.y)) / det;
  const w2 = 1 - w0 - w1;
  if (w0 < -0.02 || w1 < -0.02 || w2 < -0.02) return null; // outside the triangle
  return projectToSimplex([w0, w1, w2]);
}
