// Value formatting and graph bucket math.

export const MAX_GRAPH_POINTS = 600;

// Smallest bucket that keeps a span under the point budget: 24 h -> 144 s.
export function chooseBucket(spanSeconds: number, maxPoints: number = MAX_GRAPH_POINTS): number {
  if (spanSeconds <= 0) return 1;
  return Math.max(1, Math.ceil(spanSeconds / maxPoints));
}

export function formatValue(value: number | null, unit: string): string {
  if (value === null || Number.isNaN(value)) return "—";
  let text: string;
  if (Math.abs(value) >= 1000) text = value.toFixed(0);
  else if (Math.abs(value) >= 100) text = value.toFixed(1);
  else text = value.toFixed(2);
  return `${text} ${unit}`;
}

export function formatDuty(level: number, binary: boolean): string {
  if (binary) return level >= 1 ? "ON" : "OFF";
  return `${Math.round(level * 100)}%`;
}

export function formatDays(days: number): string {
  return `${days.toFixed(1)} d`;
}

export function stageDay(stageElapsedS: number): number {
  return Math.floor(stageElapsedS / 86400) + 1;
}
