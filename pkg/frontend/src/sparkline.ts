// Inline SVG spark-lines for the channel tiles.

export function sparklinePath(
  points: [number, number][],
  width: number = 120,
  height: number = 28,
): string {
  if (points.length === 0) return "";
  const ts = points.map((p) => p[0]);
  const vs = points.map((p) => p[1]);
  const tMin = Math.min(...ts);
  const tMax = Math.max(...ts);
  const vMin = Math.min(...vs);
  const vMax = Math.max(...vs);
  const tSpan = tMax - tMin || 1;
  const vSpan = vMax - vMin || 1;
  const parts: string[] = [];
  points.forEach(([t, v], i) => {
    const x = ((t - tMin) / tSpan) * width;
    const y = height - ((v - vMin) / vSpan) * (height - 2) - 1;
    parts.push(`${i === 0 ? "M" : "L"}${x.toFixed(1)},${y.toFixed(1)}`);
  });
  return parts.join(" ");
}

export function renderSparkline(doc: Document, points: [number, number][]): SVGElement {
  const svg = doc.createElementNS("http://www.w3.org/2000/svg", "svg");
  svg.setAttribute("viewBox", "0 0 120 28");
  svg.setAttribute("class", "sparkline");
  const path = doc.createElementNS("http://www.w3.org/2000/svg", "path");
  path.setAttribute("d", sparklinePath(points));
  path.setAttribute("fill", "none");
  svg.appendChild(path);
  return svg;
}
