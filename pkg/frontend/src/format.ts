/** Display formatting for rates and Wilson intervals. */

export function formatPercent(rate: number): string {
  const pct = rate * 100;
  return pct >= 9.95 ? `${pct.toFixed(0)}%` : `${pct.toFixed(1)}%`;
}

/** Renders like "[96.0, 99.4%]". */
export function formatInterval(interval: [number, number]): string {
  const [lo, hi] = interval;
  return `[${(lo * 100).toFixed(1)}, ${(hi * 100).toFixed(1)}%]`;
}

export function formatCell(rate: number, interval: [number, number]): string {
  return `${formatPercent(rate)} ${formatInterval(interval)}`;
}
