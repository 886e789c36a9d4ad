// Alert feed model: each stream line is "timestampMs\ttext"; lines written by
// the alerts pipeline carry an "img:<blobId>" suffix linking the picture.

export interface AlertEntry {
  offset: number;
  timestampMs: number;
  text: string;
  imageId: string | null;
}

const IMAGE_REF = /img:([0-9a-f]{32})\b/;

export function parseAlertLines(lines: string[], fromOffset = 0): AlertEntry[] {
  return lines.map((line, i) => {
    const tab = line.indexOf("\t");
    const stampRaw = tab >= 0 ? Number(line.slice(0, tab)) : NaN;
    const text = tab >= 0 ? line.slice(tab + 1) : line;
    const match = IMAGE_REF.exec(text);
    return {
      offset: fromOffset + i,
      timestampMs: Number.isFinite(stampRaw) ? stampRaw : 0,
      text,
      imageId: match ? match[1] : null,
    };
  });
}

export function newestFirst(entries: AlertEntry[]): AlertEntry[] {
  return [...entries].sort((a, b) => b.offset - a.offset);
}
