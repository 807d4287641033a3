export interface ViewNode {
  id: number;
  label: string;
  stale?: boolean;
}

export interface ViewEdge {
  id: number;
  source: number;
  target: number;
  type: string;
}

const WIDTH = 420;
const HEIGHT = 300;
const RADIUS = 110;

/** Fixed seed keeps golden-DOM tests stable across runs. */
export const LAYOUT_SEED = 42;

function angleFor(index: number, total: number): number {
  const offset = (LAYOUT_SEED % 360) * (Math.PI / 180);
  return offset + (2 * Math.PI * index) / Math.max(total, 1) - Math.PI / 2;
}

export function layout(nodes: ViewNode[]): Map<number, { x: number; y: number }> {
  const sorted = [...nodes].sort((a, b) => a.id - b.id);
  const positions = new Map<number, { x: number; y: number }>();
  sorted.forEach((node, i) => {
    const angle = angleFor(i, sorted.length);
    positions.set(node.id, {
      x: Math.round((WIDTH / 2 + RADIUS * Math.cos(angle)) * 10) / 10,
      y: Math.round((HEIGHT / 2 + RADIUS * Math.sin(angle)) * 10) / 10,
    });
  });
  return positions;
}

function esc(text: string): string {
  return text.replace(/&/g, '&amp;').replace(/</g, '&lt;').replace(/>/g, '&gt;');
}

/** Simple node-link SVG: nodes on a seeded circle, straight labeled links. */
export function renderGraphView(nodes: ViewNode[], edges: ViewEdge[]): string {
  const positions = layout(nodes);
  const links = edges
    .filter((e) => positions.has(e.source) && positions.has(e.target))
    .sort((a, b) => a.id - b.id)
    .map((e) => {
      const s = positions.get(e.source)!;
      const t = positions.get(e.target)!;
      const mx = Math.round(((s.x + t.x) / 2) * 10) / 10;
      const my = Math.round(((s.y + t.y) / 2) * 10) / 10;
      return (
        `<g class="link" data-edge="${e.id}">` +
        `<line x1="${s.x}" y1="${s.y}" x2="${t.x}" y2="${t.y}"/>` +
        `<text x="${mx}" y="${my}">${esc(e.type)}</text></g>`
      );
    })
    .join('');
  const dots = [...nodes]
    .sort((a, b) => a.id - b.id)
    .map((n) => {
      const p = positions.get(n.id)!;
      const cls = n.stale ? 'node stale' : 'node';
      return (
        `<g class="${cls}" data-node="${n.id}">` +
        `<circle cx="${p.x}" cy="${p.y}" r="14"/>` +
        `<text x="${p.x}" y="${p.y + 26}">${esc(n.label)}</text></g>`
      );
    })
    .join('');
  return (
    `<svg class="graph-view" viewBox="0 0 ${WIDTH} ${HEIGHT}" ` +
    `data-layout-seed="${LAYOUT_SEED}">${links}${dots}</svg>`
  );
}
