/**
 * Dashboard view models: labeling progress and the two-annotator
 * agreement table with Wilson intervals, straight from the service.
 */

import type { AgreementTable, Progress, QueueApi } from "./api.js";
import { formatCell } from "./format.js";

export interface ProgressView {
  labeled: number;
  remaining: number;
  total: number;
  percentDone: number;
}

export function progressView(progress: Progress): ProgressView {
  const labeled = progress.auto_labeled + progress.human_resolved;
  return {
    labeled,
    remaining: progress.in_queue,
    total: progress.total,
    percentDone: progress.total === 0 ? 0 : (100 * labeled) / progress.total,
  };
}

export interface AgreementRow {
  response: string;
  cells: { column: string; text: string; rate: number }[];
}

const ROW_ORDER = ["grouped_yes", "yes", "maybe_yes", "grouped_no", "maybe_no", "no"];

export function agreementRows(table: AgreementTable): AgreementRow[] {
  const columns = Object.keys(table.columns);
  return ROW_ORDER.map((response) => ({
    response,
    cells: columns.map((column) => {
      const cell = table.columns[column][response];
      return {
        column,
        text: formatCell(cell.rate, cell.interval),
        rate: cell.rate,
      };
    }),
  }));
}

export interface DashboardData {
  progress: ProgressView;
  agreement: AgreementRow[] | null;
}

export async function loadDashboard(
  api: QueueApi,
  annotatorA?: string,
  annotatorB?: string,
): Promise<DashboardData> {
  const progress = progressView(await api.progress());
  let agreement: AgreementRow[] | null = null;
  if (annotatorA && annotatorB) {
    const table = await api.agreement(annotatorA, annotatorB);
    agreement = table.pairs > 0 ? agreementRows(table) : null;
  }
  return { progress, agreement };
}
