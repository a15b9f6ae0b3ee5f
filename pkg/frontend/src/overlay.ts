import type { Detection, ProjectionEntry } from "./types";

// Corner ordering from the service: bottom ring counterclockwise from
// front-left (0..3), then the top ring in the same order (4..7).
const BOTTOM = [0, 1, 2, 3];
const EDGES: [number, number][] = [
  [0, 1], [1, 2], [2, 3], [3, 0],      // bottom ring
  [4, 5], [5, 6], [6, 7], [7, 4],      // top ring
  [0, 4], [1, 5], [2, 6], [3, 7],      // pillars
];

export interface PanelStyle {
  wireframe: string;
  front: string;
  detection: string;
  banner: string;
}

export const DEFAULT_STYLE: PanelStyle = {
  wireframe: "#27e07c",
  front: "#ffd24d",
  detection: "#5aa9ff",
  banner: "#ff5a5a",
};

/**
 * Draw one camera panel's overlay from the service projection response.
 * The entry's pixel coordinates are used verbatim (scaled only by the
 * canvas-to-image ratio); no geometry is computed here.
 */
export function drawWireframe(
  ctx: CanvasRenderingContext2D,
  entry: ProjectionEntry,
  scale: number,
  style: PanelStyle = DEFAULT_STYLE,
): void {
  if (entry.behind_camera || !entry.corners) {
    drawBanner(ctx, "behind camera", style);
    return;
  }
  const pts = entry.corners;
  ctx.strokeStyle = style.wireframe;
  ctx.lineWidth = 2;
  ctx.beginPath();
  for (const [a, b] of EDGES) {
    ctx.moveTo(pts[a][0] * scale, pts[a][1] * scale);
    ctx.lineTo(pts[b][0] * scale, pts[b][1] * scale);
  }
  ctx.stroke();

  // Mark the front face (edge between corners 0 and 3) for orientation.
  ctx.strokeStyle = style.front;
  ctx.beginPath();
  ctx.moveTo(pts[BOTTOM[0]][0] * scale, pts[BOTTOM[0]][1] * scale);
  ctx.lineTo(pts[BOTTOM[3]][0] * scale, pts[BOTTOM[3]][1] * scale);
  ctx.stroke();
}

export function drawDetections(
  ctx: CanvasRenderingContext2D,
  detections: Detection[],
  cameraId: string,
  scale: number,
  style: PanelStyle = DEFAULT_STYLE,
): void {
  ctx.strokeStyle = style.detection;
  ctx.lineWidth = 1;
  for (const det of detections) {
    if (det.camera_id !== cameraId) {
      continue;
    }
    const [x0, y0, x1, y1] = det.box;
    ctx.strokeRect(x0 * scale, y0 * scale, (x1 - x0) * scale, (y1 - y0) * scale);
  }
}

export function drawBanner(
  ctx: CanvasRenderingContext2D,
  message: string,
  style: PanelStyle = DEFAULT_STYLE,
): void {
  ctx.fillStyle = style.banner;
  ctx.font = "14px sans-serif";
  ctx.fillText(message, 8, 18);
}
