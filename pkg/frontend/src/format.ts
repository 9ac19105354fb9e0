// Display formatting. Server numbers are rounded to 4 decimals for the
// tables; the raw value always rides along in the tooltip so nothing is
// lost to rounding.

export function fmt4(value: number | null | undefined): string {
  if (value === null || value === undefined) return "—";
  if (Number.isInteger(value)) return String(value);
  return value.toFixed(4);
}

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

/** A <span> showing the 4-decimal view with the raw value on hover. */
export function num(value: number | null | undefined): string {
  if (value === null || value === undefined) return "<span>—</span>";
  return `<span class="num" title="${String(value)}">${fmt4(value)}</span>`;
}

export function doseLabel(amount: number): string {
  return Number.isInteger(amount) ? String(amount) : amount.toFixed(1);
}
