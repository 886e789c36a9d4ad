// Bar chart model. Bars carry the API's mean untouched (fidelity is asserted
// in tests); heightPct only scales the drawing.

export interface MonthlyAggregate {
  yearMonth: string;
  metric: string;
  mean: number;
  count: number;
  min: number;
  max: number;
}

export interface Bar {
  label: string;
  value: number;
  count: number;
  heightPct: number;
}

export function barsFor(aggregates: MonthlyAggregate[]): Bar[] {
  const top = Math.max(0, ...aggregates.map((a) => a.mean));
  return aggregates.map((a) => ({
    label: a.yearMonth,
    value: a.mean,
    count: a.count,
    heightPct: top > 0 ? (Math.max(a.mean, 0) / top) * 100 : 0,
  }));
}

export function lastTwelveMonths(now: Date): { from: string; to: string } {
  const to = `${now.getUTCFullYear()}-${String(now.getUTCMonth() + 1).padStart(2, "0")}`;
  const start = new Date(Date.UTC(now.getUTCFullYear(), now.getUTCMonth() - 11, 1));
  const from = `${start.getUTCFullYear()}-${String(start.getUTCMonth() + 1).padStart(2, "0")}`;
  return { from, to };
}
