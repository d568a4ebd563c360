// Display formatting shared by the panels. Pure functions only.

/** 1234567 -> "1,234,567". */
export function fmtCount(n: number): string {
  const sign = n < 0 ? "-" : "";
  const digits = Math.trunc(Math.abs(n)).toString();
  return sign + digits.replace(/\B(?=(\d{3})+(?!\d))/g, ",");
}

/** Token volumes: keep small counts exact, switch to k/M above 10^4/10^7. */
export function fmtTokens(n: number): string {
  if (n >= 10_000_000) return `${(n / 1_000_000).toFixed(1)}M`;
  if (n >= 10_000) return `${(n / 1_000).toFixed(1)}k`;
  return fmtCount(n);
}

/** Integer micro-dollars -> "$1,234.56". */
export function fmtMicroDollars(micro: number): string {
  const sign = micro < 0 ? "-" : "";
  const abs = Math.abs(micro);
  const cents = Math.round(abs / 10_000);
  const dollars = Math.floor(cents / 100);
  const rest = (cents % 100).toString().padStart(2, "0");
  return `${sign}$${fmtCount(dollars)}.${rest}`;
}

/** Simulated seconds -> "42.0s" / "3m 05s" / "2h 07m". */
export function fmtDuration(seconds: number): string {
  if (!Number.isFinite(seconds) || seconds < 0) return "0.0s";
  if (seconds < 60) return `${seconds.toFixed(1)}s`;
  const whole = Math.floor(seconds);
  if (whole < 3600) {
    const m = Math.floor(whole / 60);
    const s = whole % 60;
    return `${m}m ${s.toString().padStart(2, "0")}s`;
  }
  const h = Math.floor(whole / 3600);
  const m = Math.floor((whole % 3600) / 60);
  return `${h}h ${m.toString().padStart(2, "0")}m`;
}

/** 0.1234 -> "12.3%". */
export function fmtPercent(fraction: number): string {
  return `${(fraction * 100).toFixed(1)}%`;
}
